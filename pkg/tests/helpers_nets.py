"""Shared helpers for network tests: zeroing, permutation, gradient checks."""

import numpy as np
import torch

from volgen.core import VoxelGraph, VoxelNode
from volgen.critic import Critic
from volgen.encoding import (
    DTYPE,
    attention_support,
    program_tensors,
    type_onehot_matrix,
    voxel_tensors,
)
from volgen.generator import (
    GenConfig,
    Generator,
    gumbel_noise,
    labels_from_output,
    pointer_call_count,
)
from volgen.synth import SynthConfig, generate_design

GRADCHECK_SYNTH = SynthConfig(stories_range=(2, 2), partition_counts=(2, 2))


def zero_params(*modules):
    with torch.no_grad():
        for m in modules:
            for p in m.parameters():
                p.zero_()


def scale_params(module, factor, seed=0):
    rng = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=rng, dtype=DTYPE) * factor)


def permute_voxel_graph(vg: VoxelGraph, perm: list[int]) -> VoxelGraph:
    """New graph whose node j is old node perm[j]."""
    import dataclasses

    nodes = tuple(
        dataclasses.replace(vg.nodes[old], id=new) for new, old in enumerate(perm)
    )
    inverse = {old: new for new, old in enumerate(perm)}
    edges = tuple(
        sorted(tuple(sorted((inverse[a], inverse[b]))) for a, b in vg.edges)
    )
    return VoxelGraph(nodes=nodes, edges=edges, site_area=vg.site_area)


class GradCheckSetup:
    """Frozen-noise forward producing a scalar critic score of the fake design."""

    def __init__(self, seed=0):
        self.record = generate_design(np.random.default_rng(seed), GRADCHECK_SYNTH)
        # Default fan-in-scaled init keeps the 12-layer stacks well conditioned,
        # which finite differences need; seed it for reproducibility.
        torch.manual_seed(seed + 1)
        self.gen = Generator(GenConfig())
        self.critic = Critic()
        pg, vg = self.record.program_graph, self.record.voxel_graph
        self.pt = program_tensors(pg)
        self.vt = voxel_tensors(vg, self.gen.cfg.site_bounds)
        self.allowed = attention_support(vg, pg)
        self.type_matrix = type_onehot_matrix(pg)
        rng = torch.Generator().manual_seed(seed + 3)
        self.z_p = torch.randn((self.pt.num_nodes, 32), generator=rng, dtype=DTYPE)
        self.z_v = torch.randn((self.vt.num_nodes, 32), generator=rng, dtype=DTYPE)
        shape = (self.vt.num_nodes, self.pt.num_nodes)
        self.gumbels = [
            gumbel_noise(shape, rng) for _ in range(pointer_call_count(self.gen.cfg))
        ]

    def loss(self) -> torch.Tensor:
        out = self.gen(
            self.pt, self.vt, self.allowed, self.z_p, self.z_v,
            self.record.far_actual, hard=False, gumbel_noises=self.gumbels,
        )
        labels = labels_from_output(out.mask, out.att, self.type_matrix)
        o_global, o_story = self.critic(self.vt, labels)
        return 0.5 * (o_global + o_story)

    def named_parameters(self):
        for name, p in self.gen.named_parameters():
            yield f"gen.{name}", p
        for name, p in self.critic.named_parameters():
            yield f"critic.{name}", p


def finite_difference_check(setup: GradCheckSetup, coords_per_tensor=4, h=1e-5, seed=0):
    """Compare autograd gradients against central differences.

    Coordinates whose +-h window straddles a LeakyReLU kink give a one-off
    wrong difference quotient; those are re-measured with a tenfold smaller
    step (a genuinely wrong analytic gradient fails at every step size).
    Returns a list of (name, coordinate, analytic, numeric, relative error).
    """
    for _, p in setup.named_parameters():
        p.grad = None
    loss = setup.loss()
    loss.backward()

    def central_diff(flat, idx, orig, step):
        with torch.no_grad():
            flat[idx] = orig + step
        up = setup.loss().item()
        with torch.no_grad():
            flat[idx] = orig - step
        down = setup.loss().item()
        with torch.no_grad():
            flat[idx] = orig
        return (up - down) / (2 * step)

    rng = np.random.default_rng(seed)
    results = []
    for name, p in setup.named_parameters():
        grad = p.grad
        assert grad is not None, f"no gradient reached {name}"
        flat = p.detach().reshape(-1)
        n = flat.numel()
        picks = rng.choice(n, size=min(coords_per_tensor, n), replace=False)
        for idx in picks:
            idx = int(idx)
            orig = flat[idx].item()
            analytic = grad.reshape(-1)[idx].item()
            best = None
            for step in (h, h / 10.0):
                numeric = central_diff(flat, idx, orig, step)
                denom = max(abs(analytic), abs(numeric))
                rel = abs(analytic - numeric) / denom if denom > 1e-7 else 0.0
                if best is None or rel < best[1]:
                    best = (numeric, rel)
                if rel < 1e-4:
                    break
            results.append((name, idx, analytic, best[0], best[1]))
    return results
