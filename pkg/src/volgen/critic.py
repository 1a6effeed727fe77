"""Critic network: voxel GNN over (features, label) pairs with two decoders.

The critic never sees the program graph; it judges a design from per-voxel
type probabilities.  A building decoder pools all voxel embeddings, a story
decoder pools per story and averages the per-story scores.  Decoder outputs
are linear by default (WGAN critic); a sigmoid variant is available via
config.  The label encoder has no bias so an unused voxel (all-zero type
probabilities) contributes a zero label embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .core import NUM_TYPES, ValidationError
from .encoding import VOXEL_FEATURE_DIM, VoxelTensors

LABEL_SUM_TOL = 1e-4


@dataclass(frozen=True)
class CriticConfig:
    encoder_dim: int = 128
    hidden_dim: int = 256
    steps: int = 12
    sigmoid_output: bool = False
    pooling: str = "sum"  # or "max"

    def __post_init__(self):
        if self.pooling not in ("sum", "max"):
            raise ValidationError(f"pooling must be 'sum' or 'max', got {self.pooling!r}")
        if self.hidden_dim != 2 * self.encoder_dim:
            raise ValidationError("hidden_dim must be twice encoder_dim (concat of encoders)")


class Critic(nn.Module):
    def __init__(self, cfg: CriticConfig | None = None):
        super().__init__()
        self.cfg = cfg or CriticConfig()
        e = self.cfg.encoder_dim
        h = self.cfg.hidden_dim
        self.feature_encoder = nn.Linear(VOXEL_FEATURE_DIM, e)
        self.label_encoder = nn.Linear(NUM_TYPES, e, bias=False)
        self.message = nn.Linear(2 * h + 3, h)
        self.update = nn.Linear(2 * h, h)
        self.building_decoder = nn.Sequential(
            nn.Linear(h, 128), nn.LeakyReLU(), nn.Linear(128, 1)
        )
        self.story_decoder = nn.Sequential(
            nn.Linear(h, 128), nn.LeakyReLU(), nn.Linear(128, 1)
        )
        self.act = nn.LeakyReLU()
        self.double()

    def _pool(self, v: torch.Tensor, index: torch.Tensor, size: int) -> torch.Tensor:
        if self.cfg.pooling == "sum":
            pooled = torch.zeros((size, v.shape[1]), dtype=v.dtype)
            return pooled.index_add(0, index, v)
        pooled = torch.full((size, v.shape[1]), float("-inf"), dtype=v.dtype)
        return pooled.scatter_reduce(
            0, index.unsqueeze(1).expand_as(v), v, reduce="amax", include_self=True
        )

    def forward(
        self, vt: VoxelTensors, labels: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Score a design: (building-level output, story-level output)."""
        if labels.shape != (vt.num_nodes, NUM_TYPES + 1):
            raise ValidationError(
                f"labels must have shape ({vt.num_nodes}, {NUM_TYPES + 1}), got {tuple(labels.shape)}"
            )
        sums = labels.detach().sum(dim=1)
        if (sums - 1.0).abs().max().item() > LABEL_SUM_TOL:
            raise ValidationError("label rows must sum to 1")

        v = torch.cat(
            [self.feature_encoder(vt.feats), self.label_encoder(labels[:, :NUM_TYPES])],
            dim=1,
        )
        rel = vt.pos[vt.edge_dst] - vt.pos[vt.edge_src]
        for _ in range(self.cfg.steps):
            msg_in = torch.cat([v[vt.edge_dst], v[vt.edge_src], rel], dim=1)
            msg = self.message(msg_in)
            agg = torch.zeros_like(v)
            agg.index_add_(0, vt.edge_dst, msg)
            v = v + self.act(self.update(torch.cat([v, agg], dim=1)))

        if self.cfg.pooling == "sum":
            building = v.sum(dim=0, keepdim=True)
        else:
            building = v.amax(dim=0, keepdim=True)
        o_global = self.building_decoder(building).squeeze()

        n_stories = vt.num_stories
        per_story = self._pool(v, vt.story, n_stories)
        o_story = self.story_decoder(per_story).mean()

        if self.cfg.sigmoid_output:
            o_global = torch.sigmoid(o_global)
            o_story = torch.sigmoid(o_story)
        return o_global, o_story


def critic_forward(
    vt: VoxelTensors, labels: torch.Tensor, critic: Critic
) -> tuple[torch.Tensor, torch.Tensor]:
    return critic(vt, labels)
