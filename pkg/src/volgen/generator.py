"""Generator network: program GNN, voxel GNN, and the cross-modal pointer.

The program GNN embeds the conditioning graph (type/story features, per-node
noise, FAR limit) with mean-pooled neighbor messages and type-cluster means
scaled by the target ratios.  The voxel GNN embeds the design space with
sum-pooled messages over face-adjacency edges carrying relative
displacements.  A pointer module bridges the two: each voxel gets a usage
probability and a Gumbel-softmax attention distribution over the non-master
program nodes of its own story, and feeds the attended program embedding
back into its own embedding.  The pointer runs once before voxel message
passing, every ``pointer_every`` steps inside it (except at the very last
step), and once more at the end; the final call is the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .core import (
    Assignment,
    ProgramGraph,
    ValidationError,
    VolumetricDesign,
    VoxelGraph,
)
from .encoding import (
    DTYPE,
    PROGRAM_FEATURE_DIM,
    VOXEL_FEATURE_DIM,
    ProgramTensors,
    VoxelTensors,
    attention_support,
    positional_encoding_table,
    program_tensors,
    type_onehot_matrix,
    voxel_tensors,
)

_GUMBEL_EPS = 1e-20


@dataclass(frozen=True)
class GenConfig:
    latent_dim: int = 128
    noise_dim: int = 32
    program_steps: int = 4
    voxel_steps: int = 12
    pointer_every: int = 2
    temperature: float = 1.0
    hard_inference: bool = True
    far_scale: float = 10.0
    site_bounds: tuple[float, float, float] = (40.0, 40.0, 50.0)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValidationError(f"temperature must be positive, got {self.temperature}")
        if self.pointer_every < 1 or self.voxel_steps % self.pointer_every != 0:
            raise ValidationError(
                f"pointer_every={self.pointer_every} must divide voxel_steps={self.voxel_steps}"
            )
        if self.program_steps < 1 or self.voxel_steps < 1:
            raise ValidationError("message passing step counts must be >= 1")


def pointer_call_count(cfg: GenConfig) -> int:
    """Pointer invocations per forward pass: pre-loop + in-loop + final."""
    return 2 + (cfg.voxel_steps - 1) // cfg.pointer_every


def gumbel_noise(
    shape: tuple[int, ...],
    rng: torch.Generator | None = None,
    dtype: torch.dtype = DTYPE,
) -> torch.Tensor:
    u = torch.rand(shape, generator=rng, dtype=dtype)
    return -torch.log(-torch.log(u + _GUMBEL_EPS) + _GUMBEL_EPS)


def gumbel_softmax(
    logits: torch.Tensor, noise: torch.Tensor, tau: float, hard: bool
) -> torch.Tensor:
    """Row-wise Gumbel softmax; hard uses the straight-through estimator.

    -inf logits stay exactly zero.  torch.argmax picks the first maximal
    entry, so hard ties resolve to the lowest index.
    """
    y = torch.softmax((logits + noise) / tau, dim=-1)
    if hard:
        idx = y.argmax(dim=-1)
        y_hard = torch.zeros_like(y)
        y_hard.scatter_(-1, idx.unsqueeze(-1), 1.0)
        y = (y_hard - y).detach() + y
    return y


@dataclass
class PointerSnapshot:
    mask: torch.Tensor   # (V,) usage probabilities (or binary when hard)
    att: torch.Tensor    # (V, N) attention rows, zero off-support


@dataclass
class GeneratorOutput:
    mask: torch.Tensor                    # (V,)
    att: torch.Tensor                     # (V, N)
    hard: bool
    snapshots: list[PointerSnapshot] = field(default_factory=list)


class Generator(nn.Module):
    """All learnable weights of the generator, double precision."""

    def __init__(self, cfg: GenConfig | None = None):
        super().__init__()
        self.cfg = cfg or GenConfig()
        d = self.cfg.latent_dim
        z = self.cfg.noise_dim
        self.program_encoder = nn.Linear(PROGRAM_FEATURE_DIM + z + 1, d)
        self.program_message = nn.Linear(2 * d, d)
        self.program_update = nn.Linear(3 * d + 1, d)
        self.voxel_encoder = nn.Linear(VOXEL_FEATURE_DIM + z, d)
        self.voxel_message = nn.Linear(2 * d + 3, d)
        self.voxel_update = nn.Linear(2 * d, d)
        self.mask_mlp = nn.Sequential(
            nn.Linear(d, 64), nn.LeakyReLU(), nn.Linear(64, 2)
        )
        self.att_program = nn.Linear(d, d)
        self.att_voxel = nn.Linear(d, d)
        self.att_vector = nn.Parameter(torch.zeros(d))
        self.act = nn.LeakyReLU()
        self.double()
        with torch.no_grad():
            self.att_vector.normal_(0.0, 1.0 / math.sqrt(d))

    # -- program GNN --------------------------------------------------------

    def program_forward(
        self, pt: ProgramTensors, z_p: torch.Tensor, far_norm: torch.Tensor
    ) -> torch.Tensor:
        n = pt.num_nodes
        far_col = far_norm.expand(n, 1)
        x = self.program_encoder(torch.cat([pt.feats, z_p, far_col], dim=1))
        for _ in range(self.cfg.program_steps):
            # Mean of per-edge messages into each node; isolated nodes get 0.
            msg_in = torch.cat([x[pt.edge_dst], x[pt.edge_src]], dim=1)
            msg = self.program_message(msg_in)
            agg = torch.zeros_like(x)
            agg.index_add_(0, pt.edge_dst, msg)
            agg = agg / pt.degree.unsqueeze(1)
            # Mean embedding of each node's program-type cluster.
            cluster_sum = torch.zeros((6, x.shape[1]), dtype=x.dtype)
            cluster_cnt = torch.zeros(6, dtype=x.dtype)
            cluster_sum.index_add_(0, pt.type_index, x)
            cluster_cnt.index_add_(0, pt.type_index, torch.ones(n, dtype=x.dtype))
            cluster_mean = cluster_sum / cluster_cnt.clamp(min=1.0).unsqueeze(1)
            c = cluster_mean[pt.type_index] * pt.ratio.unsqueeze(1)
            x = x + self.act(self.program_update(torch.cat([x, agg, c, far_col], dim=1)))
        return x

    # -- pointer ------------------------------------------------------------

    def pointer(
        self,
        v: torch.Tensor,
        x: torch.Tensor,
        allowed: torch.Tensor,
        noise: torch.Tensor,
        tau: float,
        hard: bool,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (mask, att, updated voxel embeddings)."""
        mask = torch.softmax(self.mask_mlp(v), dim=-1)[:, 1]
        scores = torch.tanh(
            self.att_program(x).unsqueeze(0) + self.att_voxel(v).unsqueeze(1)
        )
        e = scores @ self.att_vector
        e = e.masked_fill(~allowed, float("-inf"))
        att = gumbel_softmax(e, noise, tau, hard)
        v_next = v + mask.unsqueeze(1) * (att @ x)
        return mask, att, v_next

    # -- full forward -------------------------------------------------------

    def forward(
        self,
        pt: ProgramTensors,
        vt: VoxelTensors,
        allowed: torch.Tensor,
        z_p: torch.Tensor,
        z_v: torch.Tensor,
        far_limit: float,
        *,
        tau: float | None = None,
        hard: bool | None = None,
        rng: torch.Generator | None = None,
        gumbel_noises: list[torch.Tensor] | None = None,
    ) -> GeneratorOutput:
        cfg = self.cfg
        tau = cfg.temperature if tau is None else tau
        hard = cfg.hard_inference if hard is None else hard
        dtype = pt.feats.dtype

        n_calls = pointer_call_count(cfg)
        if gumbel_noises is None:
            shape = (vt.num_nodes, pt.num_nodes)
            rng = rng or torch.Generator().manual_seed(0)
            gumbel_noises = [gumbel_noise(shape, rng, dtype) for _ in range(n_calls)]
        elif len(gumbel_noises) != n_calls:
            raise ValidationError(
                f"need {n_calls} gumbel noise tensors, got {len(gumbel_noises)}"
            )

        far_norm = torch.tensor([[far_limit / cfg.far_scale]], dtype=dtype)
        x = self.program_forward(pt, z_p, far_norm)

        pe = torch.tensor(
            positional_encoding_table(vt.story.numpy(), cfg.latent_dim), dtype=dtype
        )
        v = self.voxel_encoder(torch.cat([vt.feats, z_v], dim=1)) + pe

        snapshots: list[PointerSnapshot] = []
        calls = 0

        def run_pointer(v_cur: torch.Tensor) -> torch.Tensor:
            nonlocal calls
            mask, att, v_next = self.pointer(
                v_cur, x, allowed, gumbel_noises[calls], tau, hard
            )
            calls += 1
            snapshots.append(PointerSnapshot(mask=mask, att=att))
            return v_next

        v = run_pointer(v)
        rel = vt.pos[vt.edge_dst] - vt.pos[vt.edge_src]
        for t in range(cfg.voxel_steps):
            msg_in = torch.cat([v[vt.edge_dst], v[vt.edge_src], rel], dim=1)
            msg = self.voxel_message(msg_in)
            agg = torch.zeros_like(v)
            agg.index_add_(0, vt.edge_dst, msg)
            v = v + self.act(self.voxel_update(torch.cat([v, agg], dim=1)))
            if t < cfg.voxel_steps - 1 and (t + 1) % cfg.pointer_every == 0:
                v = run_pointer(v)
        v = run_pointer(v)

        last = snapshots[-1]
        mask = last.mask
        if hard:
            mask = (mask >= 0.5).to(dtype)
        return GeneratorOutput(mask=mask, att=last.att, hard=hard, snapshots=snapshots)


# ---------------------------------------------------------------------------
# Convenience wrappers on domain objects


def generator_forward(
    pg: ProgramGraph,
    vg: VoxelGraph,
    z_p: torch.Tensor,
    z_v: torch.Tensor,
    far_limit: float,
    gen: Generator,
    *,
    tau: float | None = None,
    hard: bool | None = None,
    rng: torch.Generator | None = None,
    gumbel_noises: list[torch.Tensor] | None = None,
) -> GeneratorOutput:
    pt = program_tensors(pg)
    vt = voxel_tensors(vg, gen.cfg.site_bounds)
    allowed = attention_support(vg, pg)
    if z_p.shape != (pt.num_nodes, gen.cfg.noise_dim):
        raise ValidationError(f"z_p must have shape ({pt.num_nodes}, {gen.cfg.noise_dim})")
    if z_v.shape != (vt.num_nodes, gen.cfg.noise_dim):
        raise ValidationError(f"z_v must have shape ({vt.num_nodes}, {gen.cfg.noise_dim})")
    return gen(
        pt, vt, allowed, z_p, z_v, far_limit,
        tau=tau, hard=hard, rng=rng, gumbel_noises=gumbel_noises,
    )


def labels_from_output(
    out_mask: torch.Tensor, out_att: torch.Tensor, type_matrix: torch.Tensor
) -> torch.Tensor:
    """Differentiable 7-dim label rows: [mask * att @ onehot(type), 1 - mask]."""
    probs = out_mask.unsqueeze(1) * (out_att @ type_matrix)
    return torch.cat([probs, (1.0 - out_mask).unsqueeze(1)], dim=1)


def assignment_from_output(
    vg: VoxelGraph, pg: ProgramGraph, out: GeneratorOutput
) -> Assignment:
    """Convert a forward pass into a sparse-row Assignment."""
    att_np = out.att.detach().numpy()
    mask_np = out.mask.detach().numpy()
    support = attention_support(vg, pg).numpy()
    rows = []
    for k in range(vg.num_nodes):
        ids = np.flatnonzero(support[k])
        rows.append(tuple((int(i), float(att_np[k, i])) for i in ids))
    return Assignment(mask=tuple(float(m) for m in mask_np), att=tuple(rows), hard=out.hard)


def sample_design(
    gen: Generator,
    pg: ProgramGraph,
    vg: VoxelGraph,
    seed: int,
    *,
    hard: bool | None = None,
    far_limit: float | None = None,
) -> tuple[VolumetricDesign, GeneratorOutput]:
    """Draw noise from a seed and run one forward pass on (pg, vg)."""
    rng = torch.Generator().manual_seed(seed)
    z_p = torch.randn((pg.num_nodes, gen.cfg.noise_dim), generator=rng, dtype=DTYPE)
    z_v = torch.randn((vg.num_nodes, gen.cfg.noise_dim), generator=rng, dtype=DTYPE)
    far = pg.far_limit if far_limit is None else far_limit
    out = generator_forward(pg, vg, z_p, z_v, far, gen, hard=hard, rng=rng)
    assignment = assignment_from_output(vg, pg, out)
    return VolumetricDesign(voxels=vg, program=pg, assignment=assignment), out
