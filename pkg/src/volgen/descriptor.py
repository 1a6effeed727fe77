"""Fixed 3D descriptor network embedding designs into 128-dim vectors.

Designs are rasterized onto a dense grid (6 type channels scaled by the
usage mask plus one occupancy channel) and passed through a residual 3D
conv stack whose final convolution collapses the spatial extent into a
128-dim embedding.  Weights are never trained here: they are seeded random
by default (usable for relative comparisons within a run) or loadable from
a file, and identical inputs always embed identically.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .core import LABEL_DIM, NUM_TYPES, ValidationError, VolumetricDesign
from .encoding import DTYPE

MAX_RESOLUTION = 64
EMBED_DIM = 128


def rasterize_design(
    design: VolumetricDesign,
    resolution: int,
    bounds: tuple[float, float, float] | None = None,
) -> np.ndarray:
    """Sample a design onto a (7, R, R, R) grid at cell centers.

    Channels 0..5 carry mask-weighted type probabilities, channel 6 the
    usage mask; cells outside every voxel stay zero, so an empty design
    rasterizes to the all-zero grid.
    """
    if resolution < 1 or resolution > MAX_RESOLUTION:
        raise ValidationError(
            f"resolution must be in [1, {MAX_RESOLUTION}], got {resolution}"
        )
    vg = design.voxels
    if bounds is None:
        bounds = tuple(
            max(n.position[ax] + n.dimension[ax] for n in vg.nodes) for ax in range(3)
        )
    grid = np.zeros((LABEL_DIM, resolution, resolution, resolution))
    centers = [
        (np.arange(resolution) + 0.5) * (bounds[ax] / resolution) for ax in range(3)
    ]
    a = design.assignment
    for k, node in enumerate(vg.nodes):
        m = a.mask[k]
        if m <= 0.0:
            continue
        row = np.zeros(LABEL_DIM)
        for pid, w in a.att[k]:
            row[design.program.node(pid).ptype.index] += m * w
        row[NUM_TYPES] = m
        sel = []
        for ax in range(3):
            lo, hi = node.interval(ax)
            sel.append((centers[ax] >= lo) & (centers[ax] < hi))
        ix, iy, iz = (np.flatnonzero(s) for s in sel)
        if len(ix) and len(iy) and len(iz):
            grid[:, ix[0] : ix[-1] + 1, iy[0] : iy[-1] + 1, iz[0] : iz[-1] + 1] = row[
                :, None, None, None
            ]
    return grid


class _ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv3d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv3d(channels, channels, 3, padding=1)
        self.act = nn.LeakyReLU()

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))


class DescriptorNet(nn.Module):
    """Residual 3D conv encoder: stem, 6 blocks with 3 downsamplings, head conv."""

    def __init__(self, resolution: int = 16, channels: int = 16):
        super().__init__()
        if resolution % 8 != 0:
            raise ValidationError("resolution must be a multiple of 8")
        self.resolution = resolution
        layers: list[nn.Module] = [nn.Conv3d(LABEL_DIM, channels, 3, padding=1)]
        c = channels
        for i in range(6):
            layers.append(_ResidualBlock(c))
            if i % 2 == 1:
                layers.append(nn.Conv3d(c, 2 * c, 3, stride=2, padding=1))
                c *= 2
        self.body = nn.Sequential(*layers)
        self.head = nn.Conv3d(c, EMBED_DIM, resolution // 8)
        self.double()

    def forward(self, grid: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(grid)).flatten(1)


class DescriptorEmbedder:
    """Frozen embedder with deterministic seeded-random weights."""

    def __init__(self, resolution: int = 16, seed: int = 0):
        self.net = DescriptorNet(resolution=resolution)
        rng = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.net.parameters():
                fan_in = p.numel() // p.shape[0] if p.ndim > 1 else p.numel()
                p.copy_(torch.randn(p.shape, generator=rng, dtype=DTYPE) / np.sqrt(fan_in))
        self.net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)

    def embed(self, design: VolumetricDesign) -> np.ndarray:
        grid = rasterize_design(design, self.net.resolution)
        x = torch.tensor(grid, dtype=DTYPE).unsqueeze(0)
        with torch.no_grad():
            return self.net(x).squeeze(0).numpy()

    def embed_all(self, designs: list[VolumetricDesign]) -> np.ndarray:
        return np.stack([self.embed(d) for d in designs])


def descriptor_embed(
    design: VolumetricDesign, resolution: int = 16, seed: int = 0
) -> np.ndarray:
    """One-shot embedding with a freshly seeded embedder."""
    return DescriptorEmbedder(resolution=resolution, seed=seed).embed(design)
