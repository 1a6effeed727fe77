"""Feature extraction and graph tensorization for the neural networks.

Program nodes carry a type one-hot plus a normalized story level (masters
get a -1 sentinel).  Voxel nodes carry normalized extents plus story level;
absolute positions are kept separately and enter the networks only through
relative displacements.  Story indices are additionally embedded with a
sinusoidal positional encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .core import (
    NUM_TYPES,
    ProgramGraph,
    ProgramType,
    ValidationError,
    VoxelGraph,
)

PROGRAM_FEATURE_DIM = NUM_TYPES + 1
VOXEL_FEATURE_DIM = 4
MASTER_STORY_SENTINEL = -1.0

DTYPE = torch.float64


def program_features(pg: ProgramGraph) -> np.ndarray:
    """Per-node features: [onehot(type) (6), story / max_story].

    Master nodes get the story sentinel -1.  Features are node-local, so
    they are invariant under graph permutation.
    """
    denom = max(pg.max_story(), 1)
    feats = np.zeros((pg.num_nodes, PROGRAM_FEATURE_DIM))
    for n in pg.nodes:
        feats[n.id, :NUM_TYPES] = n.ptype.onehot()
        feats[n.id, NUM_TYPES] = MASTER_STORY_SENTINEL if n.is_master else n.story / denom
    return feats


def voxel_features(
    vg: VoxelGraph, site_bounds: tuple[float, float, float]
) -> tuple[np.ndarray, np.ndarray]:
    """Per-voxel features [w, d, h, story level] and normalized centers.

    Extents and centers are scaled by the site bounds; the story level is
    scaled by the highest story.  Absolute coordinates stay out of the
    features so a translated site encodes identically.
    """
    bx, by, bz = site_bounds
    denom = max(vg.max_story(), 1)
    feats = np.zeros((vg.num_nodes, VOXEL_FEATURE_DIM))
    centers = np.zeros((vg.num_nodes, 3))
    for n in vg.nodes:
        w, d, h = n.dimension
        feats[n.id] = (w / bx, d / by, h / bz, n.story / denom)
        cx, cy, cz = n.center
        centers[n.id] = (cx / bx, cy / by, cz / bz)
    return feats, centers


def positional_encoding(story: int, dim: int = 128) -> np.ndarray:
    """Sinusoidal story encoding: pe[2j] = sin(s/10000^(2j/dim)), pe[2j+1] = cos."""
    if story < 0:
        raise ValidationError(f"story must be non-negative, got {story}")
    j = np.arange(dim // 2)
    freq = 1.0 / np.power(10000.0, 2.0 * j / dim)
    pe = np.zeros(dim)
    pe[0::2] = np.sin(story * freq)
    pe[1::2] = np.cos(story * freq)
    return pe


def positional_encoding_table(stories: np.ndarray, dim: int = 128) -> np.ndarray:
    return np.stack([positional_encoding(int(s), dim) for s in stories])


def _directed_edges(edges, num_nodes: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Both directions of an undirected edge list as (src, dst) index tensors."""
    if edges:
        src = [a for a, b in edges] + [b for a, b in edges]
        dst = [b for a, b in edges] + [a for a, b in edges]
    else:
        src, dst = [], []
    return (
        torch.tensor(src, dtype=torch.long),
        torch.tensor(dst, dtype=torch.long),
    )


@dataclass
class ProgramTensors:
    """Program graph prepared for message passing."""

    feats: torch.Tensor          # (N, 7)
    edge_src: torch.Tensor       # (2E,)
    edge_dst: torch.Tensor       # (2E,)
    degree: torch.Tensor         # (N,) neighbor counts, clamped to >= 1
    type_index: torch.Tensor     # (N,) program type index
    ratio: torch.Tensor          # (N,) target program ratio of the node's type
    is_master: torch.Tensor      # (N,) bool
    story: torch.Tensor          # (N,) instance story, -1 for masters

    @property
    def num_nodes(self) -> int:
        return self.feats.shape[0]


def program_tensors(pg: ProgramGraph, dtype: torch.dtype = DTYPE) -> ProgramTensors:
    feats = torch.tensor(program_features(pg), dtype=dtype)
    pairs = [e.pair for e in pg.edges]
    src, dst = _directed_edges(pairs, pg.num_nodes)
    degree = torch.zeros(pg.num_nodes, dtype=dtype)
    if dst.numel():
        degree.index_add_(0, dst, torch.ones(dst.shape[0], dtype=dtype))
    degree = degree.clamp(min=1.0)
    type_index = torch.tensor([n.ptype.index for n in pg.nodes], dtype=torch.long)
    ratio = torch.tensor([pg.tpr.get(n.ptype, 0.0) for n in pg.nodes], dtype=dtype)
    is_master = torch.tensor([n.is_master for n in pg.nodes], dtype=torch.bool)
    story = torch.tensor([n.story for n in pg.nodes], dtype=torch.long)
    return ProgramTensors(feats, src, dst, degree, type_index, ratio, is_master, story)


@dataclass
class VoxelTensors:
    """Voxel graph prepared for message passing."""

    feats: torch.Tensor          # (V, 4)
    pos: torch.Tensor            # (V, 3) normalized centers
    story: torch.Tensor          # (V,)
    edge_src: torch.Tensor       # (2E,)
    edge_dst: torch.Tensor       # (2E,)

    @property
    def num_nodes(self) -> int:
        return self.feats.shape[0]

    @property
    def num_stories(self) -> int:
        return int(self.story.max().item()) + 1


def voxel_tensors(
    vg: VoxelGraph,
    site_bounds: tuple[float, float, float],
    dtype: torch.dtype = DTYPE,
) -> VoxelTensors:
    feats_np, centers_np = voxel_features(vg, site_bounds)
    src, dst = _directed_edges(list(vg.edges), vg.num_nodes)
    return VoxelTensors(
        feats=torch.tensor(feats_np, dtype=dtype),
        pos=torch.tensor(centers_np, dtype=dtype),
        story=torch.tensor([n.story for n in vg.nodes], dtype=torch.long),
        edge_src=src,
        edge_dst=dst,
    )


def attention_support(vg: VoxelGraph, pg: ProgramGraph) -> torch.Tensor:
    """(V, N) bool matrix: voxel k may attend to non-master node i of its story.

    Raises when some story has voxels but no program node to point at.
    """
    allowed = torch.zeros((vg.num_nodes, pg.num_nodes), dtype=torch.bool)
    nodes_by_story: dict[int, list[int]] = {}
    for n in pg.nodes:
        if not n.is_master:
            nodes_by_story.setdefault(n.story, []).append(n.id)
    for v in vg.nodes:
        ids = nodes_by_story.get(v.story)
        if not ids:
            raise ValidationError(
                f"story {v.story} has voxels but no program nodes to point at"
            )
        allowed[v.id, ids] = True
    return allowed


def type_onehot_matrix(pg: ProgramGraph, dtype: torch.dtype = DTYPE) -> torch.Tensor:
    """(N, 6) rows mapping attention over nodes to type probabilities."""
    m = torch.zeros((pg.num_nodes, NUM_TYPES), dtype=dtype)
    for n in pg.nodes:
        m[n.id, n.ptype.index] = 1.0
    return m


def real_label_rows(vg: VoxelGraph) -> np.ndarray:
    """Ground-truth 7-dim one-hot label rows (unused voxels hit the last slot)."""
    labels = np.zeros((vg.num_nodes, NUM_TYPES + 1))
    for n in vg.nodes:
        if n.label is None:
            labels[n.id, NUM_TYPES] = 1.0
        else:
            labels[n.id, n.label.index] = 1.0
    return labels
