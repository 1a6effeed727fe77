import dataclasses

import numpy as np
import pytest
import torch

from volgen.core import (
    ProgramEdge,
    ProgramGraph,
    ProgramType,
    ValidationError,
    build_program_graph,
    build_voxel_graph,
)
from volgen.encoding import (
    DTYPE,
    attention_support,
    program_tensors,
    voxel_tensors,
)
from volgen.generator import (
    GenConfig,
    Generator,
    assignment_from_output,
    generator_forward,
    gumbel_noise,
    pointer_call_count,
    sample_design,
)

from conftest import make_record, one_story_program, row_of_cubes
from helpers_nets import GradCheckSetup, finite_difference_check, permute_voxel_graph, zero_params

P = ProgramType


def _noise_for(pg, vg, gen, seed=0):
    rng = torch.Generator().manual_seed(seed)
    z_p = torch.randn((pg.num_nodes, gen.cfg.noise_dim), generator=rng, dtype=DTYPE)
    z_v = torch.randn((vg.num_nodes, gen.cfg.noise_dim), generator=rng, dtype=DTYPE)
    shape = (vg.num_nodes, pg.num_nodes)
    gumbels = [gumbel_noise(shape, rng) for _ in range(pointer_call_count(gen.cfg))]
    return z_p, z_v, gumbels


class TestGenConfig:
    def test_pointer_every_must_divide(self):
        with pytest.raises(ValidationError):
            GenConfig(voxel_steps=12, pointer_every=5)

    def test_temperature_positive(self):
        with pytest.raises(ValidationError):
            GenConfig(temperature=0.0)

    @pytest.mark.parametrize(
        "steps,every,calls",
        [(12, 2, 7), (12, 3, 5), (12, 6, 3), (12, 12, 2), (4, 2, 3)],
    )
    def test_pointer_call_count(self, steps, every, calls):
        cfg = GenConfig(voxel_steps=steps, pointer_every=every)
        assert pointer_call_count(cfg) == calls

    def test_snapshot_count_matches_schedule(self, tiny_record):
        gen = Generator(GenConfig())
        _, out = sample_design(gen, tiny_record.program_graph, tiny_record.voxel_graph, seed=0)
        assert len(out.snapshots) == 7


class TestProgramGNN:
    def test_zero_weights_residual_identity(self, tiny_record):
        gen = Generator()
        pt = program_tensors(tiny_record.program_graph)
        z_p = torch.zeros((pt.num_nodes, 32), dtype=DTYPE)
        far = torch.tensor([[0.5]], dtype=DTYPE)
        x0 = gen.program_encoder(torch.cat([pt.feats, z_p, far.expand(pt.num_nodes, 1)], dim=1))
        zero_params(gen.program_message, gen.program_update)
        x = gen.program_forward(pt, z_p, far)
        torch.testing.assert_close(x, x0, rtol=0, atol=0)

    def test_output_shape(self, tiny_record):
        gen = Generator()
        pt = program_tensors(tiny_record.program_graph)
        z_p = torch.zeros((pt.num_nodes, 32), dtype=DTYPE)
        x = gen.program_forward(pt, z_p, torch.tensor([[1.0]], dtype=DTYPE))
        assert x.shape == (pt.num_nodes, 128)

    def test_permutation_equivariance(self, tiny_record):
        pg = tiny_record.program_graph
        gen = Generator()
        rng = np.random.default_rng(3)
        perm = list(rng.permutation(pg.num_nodes))
        inverse = {old: new for new, old in enumerate(perm)}
        nodes = tuple(
            dataclasses.replace(pg.nodes[old], id=new) for new, old in enumerate(perm)
        )
        edges = tuple(
            sorted(
                (ProgramEdge(inverse[e.a], inverse[e.b], e.kind) for e in pg.edges),
                key=lambda e: e.pair,
            )
        )
        pg2 = ProgramGraph(nodes=nodes, edges=edges, far_limit=pg.far_limit, tpr=pg.tpr)

        z = torch.randn((pg.num_nodes, 32), generator=torch.Generator().manual_seed(0), dtype=DTYPE)
        z2 = z[perm]
        far = torch.tensor([[0.7]], dtype=DTYPE)
        x1 = gen.program_forward(program_tensors(pg), z, far)
        x2 = gen.program_forward(program_tensors(pg2), z2, far)
        torch.testing.assert_close(x2, x1[perm], rtol=0, atol=1e-6)

    def test_isolated_node_gets_zero_message(self):
        # A one-node graph has no edges at all: forward must not divide by zero.
        pg = one_story_program([P.OFFICE], [])
        pg = ProgramGraph(pg.nodes, (), pg.far_limit, pg.tpr)
        gen = Generator()
        pt = program_tensors(pg)
        z = torch.zeros((pt.num_nodes, 32), dtype=DTYPE)
        x = gen.program_forward(pt, z, torch.tensor([[1.0]], dtype=DTYPE))
        assert torch.isfinite(x).all()


class TestPointer:
    def _tiny(self):
        pg = one_story_program([P.OFFICE, P.LOBBY_CORRIDOR], [(0, 1)])
        vg = row_of_cubes(3)
        return pg, vg

    def test_singleton_support_att_is_one(self):
        pg = one_story_program([P.OFFICE], [])
        vg = row_of_cubes(2)
        gen = Generator()
        z_p, z_v, gumbels = _noise_for(pg, vg, gen, seed=1)
        out = generator_forward(pg, vg, z_p, z_v, 1.0, gen, hard=False, gumbel_noises=gumbels)
        instance = [n.id for n in pg.nodes if not n.is_master]
        assert torch.all(out.att[:, instance[0]] == 1.0)

    def test_off_story_attention_exactly_zero(self):
        rec = make_record(7)
        gen = Generator()
        pg, vg = rec.program_graph, rec.voxel_graph
        z_p, z_v, gumbels = _noise_for(pg, vg, gen, seed=2)
        out = generator_forward(pg, vg, z_p, z_v, 1.0, gen, hard=False, gumbel_noises=gumbels)
        allowed = attention_support(vg, pg)
        assert torch.all(out.att[~allowed] == 0.0)

    def test_zero_mask_leaves_embedding_unchanged(self):
        pg, vg = self._tiny()
        gen = Generator()
        # Huge "unused" logit gap drives the mask probability to exactly 0.
        with torch.no_grad():
            gen.mask_mlp[2].weight.zero_()
            gen.mask_mlp[2].bias.copy_(torch.tensor([1e30, 0.0], dtype=DTYPE))
        v = torch.randn((vg.num_nodes, 128), generator=torch.Generator().manual_seed(4), dtype=DTYPE)
        x = torch.randn((pg.num_nodes, 128), generator=torch.Generator().manual_seed(5), dtype=DTYPE)
        allowed = attention_support(vg, pg)
        noise = torch.zeros((vg.num_nodes, pg.num_nodes), dtype=DTYPE)
        mask, att, v_next = gen.pointer(v, x, allowed, noise, tau=1.0, hard=False)
        assert torch.all(mask == 0.0)
        torch.testing.assert_close(v_next, v, rtol=0, atol=0)

    def test_soft_rows_sum_to_one(self):
        rec = make_record(11)
        gen = Generator()
        pg, vg = rec.program_graph, rec.voxel_graph
        rows = 0
        for seed in range(200):
            z_p, z_v, gumbels = _noise_for(pg, vg, gen, seed=seed)
            out = generator_forward(pg, vg, z_p, z_v, 1.0, gen, hard=False, gumbel_noises=gumbels)
            sums = out.att.sum(dim=1)
            assert torch.all((sums - 1.0).abs() <= 1e-5)
            rows += sums.numel()
            if rows >= 1000:
                break
        assert rows >= 1000

    def test_hard_rows_are_one_hot(self):
        rec = make_record(11)
        gen = Generator()
        pg, vg = rec.program_graph, rec.voxel_graph
        z_p, z_v, gumbels = _noise_for(pg, vg, gen, seed=3)
        out = generator_forward(pg, vg, z_p, z_v, 1.0, gen, hard=True, gumbel_noises=gumbels)
        assert torch.all((out.att == 0.0) | (out.att == 1.0))
        assert torch.all(out.att.sum(dim=1) == 1.0)
        assert set(out.mask.tolist()) <= {0.0, 1.0}


class TestGeneratorForward:
    def test_zero_weights_uniform_attention_half_mask(self):
        rec = make_record(9)
        gen = Generator()
        zero_params(gen)
        pg, vg = rec.program_graph, rec.voxel_graph
        z_p = torch.zeros((pg.num_nodes, 32), dtype=DTYPE)
        z_v = torch.zeros((vg.num_nodes, 32), dtype=DTYPE)
        zero_noise = [
            torch.zeros((vg.num_nodes, pg.num_nodes), dtype=DTYPE)
            for _ in range(pointer_call_count(gen.cfg))
        ]
        out = generator_forward(pg, vg, z_p, z_v, 1.0, gen, hard=False, gumbel_noises=zero_noise)
        assert torch.all(out.mask == 0.5)
        allowed = attention_support(vg, pg)
        for k in range(vg.num_nodes):
            support = allowed[k]
            expected = 1.0 / int(support.sum())
            torch.testing.assert_close(
                out.att[k][support],
                torch.full((int(support.sum()),), expected, dtype=DTYPE),
            )

    def test_fixed_seed_reproducible(self, tiny_record):
        gen = Generator()
        pg, vg = tiny_record.program_graph, tiny_record.voxel_graph
        d1, o1 = sample_design(gen, pg, vg, seed=21, hard=False)
        d2, o2 = sample_design(gen, pg, vg, seed=21, hard=False)
        assert d1.assignment == d2.assignment
        torch.testing.assert_close(o1.att, o2.att, rtol=0, atol=0)

    def test_voxel_permutation_equivariance(self, tiny_record):
        gen = Generator()
        pg, vg = tiny_record.program_graph, tiny_record.voxel_graph
        rng = np.random.default_rng(1)
        perm = list(rng.permutation(vg.num_nodes))
        vg2 = permute_voxel_graph(vg, perm)

        z_p, z_v, gumbels = _noise_for(pg, vg, gen, seed=8)
        z_v2 = z_v[perm]
        gumbels2 = [g[perm] for g in gumbels]
        out1 = generator_forward(pg, vg, z_p, z_v, 1.0, gen, hard=False, gumbel_noises=gumbels)
        out2 = generator_forward(pg, vg2, z_p, z_v2, 1.0, gen, hard=False, gumbel_noises=gumbels2)
        torch.testing.assert_close(out2.att, out1.att[perm], rtol=0, atol=1e-6)
        torch.testing.assert_close(out2.mask, out1.mask[perm], rtol=0, atol=1e-6)

    def test_residual_stability_reduces_to_chained_pointers(self, tiny_record):
        gen = Generator()
        zero_params(gen.voxel_message, gen.voxel_update)
        pg, vg = tiny_record.program_graph, tiny_record.voxel_graph
        z_p, z_v, gumbels = _noise_for(pg, vg, gen, seed=13)
        out = generator_forward(pg, vg, z_p, z_v, 2.0, gen, hard=False, gumbel_noises=gumbels)

        pt = program_tensors(pg)
        vt = voxel_tensors(vg, gen.cfg.site_bounds)
        allowed = attention_support(vg, pg)
        far = torch.tensor([[2.0 / gen.cfg.far_scale]], dtype=DTYPE)
        x = gen.program_forward(pt, z_p, far)
        from volgen.encoding import positional_encoding_table

        v = gen.voxel_encoder(torch.cat([vt.feats, z_v], dim=1)) + torch.tensor(
            positional_encoding_table(vt.story.numpy(), 128), dtype=DTYPE
        )
        mask = att = None
        for noise in gumbels:
            mask, att, v = gen.pointer(v, x, allowed, noise, tau=1.0, hard=False)
        torch.testing.assert_close(out.att, att, rtol=0, atol=1e-12)
        torch.testing.assert_close(out.mask, mask, rtol=0, atol=1e-12)

    def test_mask_in_unit_interval(self, tiny_record):
        gen = Generator()
        d, out = sample_design(gen, tiny_record.program_graph, tiny_record.voxel_graph, seed=2, hard=False)
        assert torch.all(out.mask >= 0.0) and torch.all(out.mask <= 1.0)

    def test_wrong_noise_shape_rejected(self, tiny_record):
        gen = Generator()
        pg, vg = tiny_record.program_graph, tiny_record.voxel_graph
        with pytest.raises(ValidationError, match="z_p"):
            generator_forward(
                pg, vg,
                torch.zeros((1, 32), dtype=DTYPE),
                torch.zeros((vg.num_nodes, 32), dtype=DTYPE),
                1.0, gen,
            )

    def test_assignment_round_trip(self, tiny_record):
        gen = Generator()
        pg, vg = tiny_record.program_graph, tiny_record.voxel_graph
        design, out = sample_design(gen, pg, vg, seed=5, hard=True)
        a = assignment_from_output(vg, pg, out)
        assert a == design.assignment
        assert a.hard


class TestGradients:
    def test_finite_difference_spot_check(self):
        setup = GradCheckSetup(seed=0)
        results = finite_difference_check(setup, coords_per_tensor=2, h=1e-5, seed=0)
        worst = max(r[4] for r in results)
        assert worst < 1e-4, [r for r in results if r[4] >= 1e-4]
