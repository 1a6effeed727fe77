"""WGAN-GP training loop tying the generator and critic together.

The critic score of a design is the unweighted mean of its building-level
and story-level decoder outputs.  The gradient penalty interpolates real
and generated designs in the 7-dim per-voxel label space while the voxel
graph connectivity stays fixed; the penalty differentiates the sum of the
two decoder outputs with respect to the interpolated labels.  The generator
trains with soft Gumbel attention and updates once per ``n_critic`` critic
steps.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from . import checkpoint, metrics
from .core import ValidationError, VolumetricDesign
from .critic import Critic
from .encoding import (
    DTYPE,
    attention_support,
    program_tensors,
    real_label_rows,
    type_onehot_matrix,
    voxel_tensors,
)
from .generator import (
    Generator,
    assignment_from_output,
    gumbel_noise,
    labels_from_output,
    pointer_call_count,
)
from .synth import SynthRecord


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; the last good checkpoint is retained."""


@dataclass(frozen=True)
class TrainConfig:
    lambda_gp: float = 10.0
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    adam_betas: tuple[float, float] = (0.5, 0.999)
    batch_size: int = 8
    n_critic: int = 5
    epochs: int = 50
    checkpoint_every: int = 0      # critic steps; 0 = final checkpoint only
    metrics_every: int = 1         # epochs between held-out metric evaluations
    holdout_fraction: float = 0.2
    eval_samples: int = 1          # hard samples per held-out record
    seed: int = 0

    def __post_init__(self):
        if self.lambda_gp < 0 or self.lr_g <= 0 or self.lr_d <= 0:
            raise ValidationError("penalty weight and learning rates must be positive")
        if self.batch_size < 1 or self.n_critic < 1 or self.epochs < 1:
            raise ValidationError("batch size, critic ratio, and epochs must be >= 1")
        if not (0.0 <= self.holdout_fraction < 1.0):
            raise ValidationError("holdout_fraction must be in [0, 1)")


def real_labels(record: SynthRecord) -> np.ndarray:
    """Per-voxel 7-dim one-hot labels from ground truth."""
    return real_label_rows(record.voxel_graph)


def gradient_penalty(
    critic: Critic,
    vt,
    real: torch.Tensor,
    fake: torch.Tensor,
    eps: torch.Tensor,
    lambda_gp: float = 10.0,
) -> torch.Tensor:
    """lambda * (|grad of (o_global + o_story) at eps-interpolated labels| - 1)^2.

    The interpolation runs in label space only; connectivity and voxel
    features are shared by both endpoints and receive no gradient.
    """
    interp = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    o_global, o_story = critic(vt, interp)
    grad = torch.autograd.grad(o_global + o_story, interp, create_graph=True)[0]
    if not torch.isfinite(grad).all():
        raise TrainingDiverged("non-finite gradient inside the gradient penalty")
    norm = grad.flatten().norm(2)
    return lambda_gp * (norm - 1.0) ** 2


@dataclass
class _RecordCache:
    record: SynthRecord
    pt: object
    vt: object
    allowed: torch.Tensor
    type_matrix: torch.Tensor
    real: torch.Tensor


@dataclass
class TrainResult:
    losses: list[dict] = field(default_factory=list)
    metric_rows: list[dict] = field(default_factory=list)
    critic_steps: int = 0
    generator_steps: int = 0
    checkpoint_path: str | None = None


def _prepare(records: list[SynthRecord], gen: Generator) -> list[_RecordCache]:
    caches = []
    for r in records:
        pt = program_tensors(r.program_graph)
        vt = voxel_tensors(r.voxel_graph, gen.cfg.site_bounds)
        allowed = attention_support(r.voxel_graph, r.program_graph)
        tm = type_onehot_matrix(r.program_graph)
        real = torch.tensor(real_labels(r), dtype=DTYPE)
        caches.append(_RecordCache(r, pt, vt, allowed, tm, real))
    return caches


def _fake_labels(gen: Generator, cache: _RecordCache, rng: torch.Generator) -> torch.Tensor:
    z_p = torch.randn((cache.pt.num_nodes, gen.cfg.noise_dim), generator=rng, dtype=DTYPE)
    z_v = torch.randn((cache.vt.num_nodes, gen.cfg.noise_dim), generator=rng, dtype=DTYPE)
    shape = (cache.vt.num_nodes, cache.pt.num_nodes)
    noises = [gumbel_noise(shape, rng) for _ in range(pointer_call_count(gen.cfg))]
    out = gen(
        cache.pt, cache.vt, cache.allowed, z_p, z_v, cache.record.far_actual,
        hard=False, gumbel_noises=noises,
    )
    return labels_from_output(out.mask, out.att, cache.type_matrix)


def _score(critic: Critic, vt, labels: torch.Tensor) -> torch.Tensor:
    o_global, o_story = critic(vt, labels)
    return 0.5 * (o_global + o_story)


def _eval_holdout(
    gen: Generator, caches: list[_RecordCache], cfg: TrainConfig, epoch: int
) -> dict:
    from .generator import sample_design

    cons, fars, tprs = [], [], []
    for i, cache in enumerate(caches):
        r = cache.record
        for s in range(cfg.eval_samples):
            design, _ = sample_design(
                gen, r.program_graph, r.voxel_graph,
                seed=cfg.seed + 7919 * epoch + 31 * i + s, hard=True,
            )
            cons.append(metrics.connectivity_accuracy(design))
            fars.append(metrics.far_distance(design, r.far_actual))
            tprs.append(metrics.tpr_accuracy(design, r.tpr_actual))
    return {
        "epoch": epoch,
        "con": float(np.mean(cons)),
        "far_dist": float(np.mean(fars)),
        "tpr_acc": float(np.mean(tprs)),
    }


def train(
    records: list[SynthRecord],
    gen: Generator,
    critic: Critic,
    cfg: TrainConfig,
    out_dir=None,
) -> TrainResult:
    """Run the adversarial loop; returns loss/metric history and counters."""
    if not records:
        raise ValidationError("training dataset is empty")
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    n_hold = int(round(len(records) * cfg.holdout_fraction))
    train_records = records[: len(records) - n_hold] if n_hold else records
    hold_records = records[len(records) - n_hold :] if n_hold else records[: min(4, len(records))]

    caches = _prepare(train_records, gen)
    hold_caches = _prepare(hold_records, gen)

    shuffle_rng = np.random.default_rng(cfg.seed)
    noise_rng = torch.Generator().manual_seed(cfg.seed)

    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_g, betas=cfg.adam_betas)
    opt_d = torch.optim.Adam(critic.parameters(), lr=cfg.lr_d, betas=cfg.adam_betas)

    result = TrainResult()
    ckpt_path = os.path.join(out_dir, "ckpt_last.bin") if out_dir else None

    def save(step: int):
        if out_dir is None:
            return None
        path = os.path.join(out_dir, f"ckpt_{step}.bin")
        checkpoint.save_checkpoint(
            path, generator=gen, critic=critic, step=step,
            optimizer_states={"g": opt_g.state_dict(), "d": opt_d.state_dict()},
        )
        return path

    last_g_loss: float | None = None
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(caches))
        for start in range(0, len(order), cfg.batch_size):
            batch = [caches[i] for i in order[start : start + cfg.batch_size]]
            try:
                # Critic step.
                opt_d.zero_grad()
                d_fake, d_real, gp = [], [], []
                for cache in batch:
                    with torch.no_grad():
                        fake = _fake_labels(gen, cache, noise_rng)
                    d_fake.append(_score(critic, cache.vt, fake))
                    d_real.append(_score(critic, cache.vt, cache.real))
                    eps = torch.rand((), generator=noise_rng, dtype=DTYPE)
                    gp.append(
                        gradient_penalty(critic, cache.vt, cache.real, fake, eps, cfg.lambda_gp)
                    )
                d_loss = (
                    torch.stack(d_fake).mean()
                    - torch.stack(d_real).mean()
                    + torch.stack(gp).mean()
                )
                if not torch.isfinite(d_loss):
                    raise TrainingDiverged(
                        f"critic loss is {d_loss.item()} at step {result.critic_steps}"
                    )
                d_loss.backward()
                opt_d.step()
                result.critic_steps += 1

                # Generator step once per n_critic critic steps.
                if result.critic_steps % cfg.n_critic == 0:
                    opt_g.zero_grad()
                    g_terms = []
                    for cache in batch:
                        fake = _fake_labels(gen, cache, noise_rng)
                        g_terms.append(-_score(critic, cache.vt, fake))
                    g_loss = torch.stack(g_terms).mean()
                    if not torch.isfinite(g_loss):
                        raise TrainingDiverged(f"generator loss is {g_loss.item()}")
                    g_loss.backward()
                    opt_g.step()
                    result.generator_steps += 1
                    last_g_loss = float(g_loss.item())
            except TrainingDiverged:
                result.checkpoint_path = save(result.critic_steps)
                raise

            result.losses.append(
                {
                    "step": result.critic_steps,
                    "d_loss": float(d_loss.item()),
                    "g_loss": last_g_loss,
                    "gp": float(torch.stack(gp).mean().item()),
                }
            )
            if (
                cfg.checkpoint_every
                and result.critic_steps % cfg.checkpoint_every == 0
            ):
                result.checkpoint_path = save(result.critic_steps)

        if cfg.metrics_every and (epoch + 1) % cfg.metrics_every == 0:
            result.metric_rows.append(_eval_holdout(gen, hold_caches, cfg, epoch))

    result.checkpoint_path = save(result.critic_steps) or result.checkpoint_path
    if out_dir is not None:
        _write_csv(os.path.join(out_dir, "losses.csv"), result.losses,
                   ["step", "d_loss", "g_loss", "gp"])
        _write_csv(os.path.join(out_dir, "metrics.csv"), result.metric_rows,
                   ["epoch", "con", "far_dist", "tpr_acc"])
    return result


def _write_csv(path, rows, fieldnames):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    k: repr(v) if isinstance(v, float) else ("" if v is None else v)
                    for k, v in row.items()
                }
            )
