import numpy as np
import pytest

from volgen.core import ProgramType, ValidationError, build_program_graph, build_voxel_graph
from volgen.encoding import (
    attention_support,
    positional_encoding,
    program_features,
    real_label_rows,
    voxel_features,
)

from conftest import one_story_program, row_of_cubes

P = ProgramType


class TestProgramFeatures:
    def test_stairs_on_single_story(self):
        pg = one_story_program([P.STAIRS], [])
        feats = program_features(pg)
        assert feats[0].tolist() == [0, 0, 1, 0, 0, 0, 0]

    def test_master_sentinel(self):
        pg = one_story_program([P.OFFICE], [])
        master = next(n for n in pg.nodes if n.is_master)
        feats = program_features(pg)
        assert feats[master.id].tolist() == [0, 0, 0, 0, 1, 0, -1]

    def test_story_normalization(self):
        pg = build_program_graph([[P.OFFICE], [P.OFFICE], [P.OFFICE]], [])
        feats = program_features(pg)
        assert feats[0][6] == 0.0
        assert feats[1][6] == pytest.approx(0.5)
        assert feats[2][6] == pytest.approx(1.0)

    def test_node_local(self):
        pg = build_program_graph([[P.OFFICE, P.STAIRS]], [(0, 1)])
        pg_noedge = build_program_graph([[P.OFFICE, P.STAIRS]], [])
        np.testing.assert_array_equal(program_features(pg), program_features(pg_noedge))


class TestPositionalEncoding:
    def test_story_zero_alternates(self):
        pe = positional_encoding(0, dim=8)
        assert pe.tolist() == [0, 1, 0, 1, 0, 1, 0, 1]

    def test_first_coordinate_is_sin_story(self):
        assert positional_encoding(3)[0] == pytest.approx(np.sin(3.0))

    def test_distinct_stories_distinct_codes(self):
        assert not np.allclose(positional_encoding(1), positional_encoding(2))

    def test_deterministic(self):
        np.testing.assert_array_equal(positional_encoding(5), positional_encoding(5))

    def test_negative_story_rejected(self):
        with pytest.raises(ValidationError):
            positional_encoding(-1)


class TestVoxelFeatures:
    def test_unit_cube_scaled_dims(self):
        vg = row_of_cubes(1)
        feats, centers = voxel_features(vg, (40.0, 40.0, 50.0))
        assert feats[0].tolist() == [1 / 40, 1 / 40, 1 / 50, 0.0]
        assert centers[0].tolist() == [0.5 / 40, 0.5 / 40, 0.5 / 50]

    def test_translation_invariance_of_features(self):
        vg = row_of_cubes(2)
        shifted = build_voxel_graph(
            [((float(i) + 7.0, 3.0, 11.0), (1.0, 1.0, 1.0), 0) for i in range(2)], 100.0
        )
        f1, _ = voxel_features(vg, (40.0, 40.0, 50.0))
        f2, _ = voxel_features(shifted, (40.0, 40.0, 50.0))
        np.testing.assert_array_equal(f1, f2)

    def test_relative_displacement(self):
        vg = row_of_cubes(2)
        _, centers = voxel_features(vg, (40.0, 40.0, 50.0))
        delta = centers[1] - centers[0]
        np.testing.assert_allclose(delta, [1 / 40, 0, 0])


class TestAttentionSupport:
    def test_same_story_non_master_only(self):
        pg = build_program_graph([[P.OFFICE, P.LOBBY_CORRIDOR], [P.OFFICE]], [(0, 1)])
        cubes = [
            ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), 0),
            ((0.0, 0.0, 1.0), (1.0, 1.0, 1.0), 1),
        ]
        vg = build_voxel_graph(cubes, 100.0)
        allowed = attention_support(vg, pg)
        assert allowed[0].tolist() == [True, True, False, False, False]
        assert allowed[1].tolist() == [False, False, True, False, False]

    def test_story_without_program_nodes_rejected(self):
        pg = one_story_program([P.OFFICE], [])
        cubes = [
            ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), 0),
            ((0.0, 0.0, 1.0), (1.0, 1.0, 1.0), 1),
        ]
        vg = build_voxel_graph(cubes, 100.0)
        with pytest.raises(ValidationError, match="no program nodes"):
            attention_support(vg, pg)


def test_real_label_rows(tiny_record):
    rows = real_label_rows(tiny_record.voxel_graph)
    np.testing.assert_array_equal(rows.sum(axis=1), 1.0)
    for n in tiny_record.voxel_graph.nodes:
        if n.label is None:
            assert rows[n.id, 6] == 1.0
        else:
            assert rows[n.id, n.label.index] == 1.0
