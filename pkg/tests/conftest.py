import numpy as np
import pytest

from volgen.core import (
    Assignment,
    ProgramType,
    VolumetricDesign,
    build_program_graph,
    build_voxel_graph,
)
from volgen.synth import CorePattern, SynthConfig, generate_design

P = ProgramType

# Small, fast config used wherever a record is just a fixture.
TINY_SYNTH = SynthConfig(
    stories_range=(2, 3),
    partition_counts=(2, 3),
    core_pattern=CorePattern.SINGLE_CORE,
)


def make_record(seed: int, cfg: SynthConfig = TINY_SYNTH):
    return generate_design(np.random.default_rng(seed), cfg)


@pytest.fixture
def tiny_record():
    return make_record(5)


def row_of_cubes(n: int, site_area: float = 100.0):
    """n unit cubes in a row along x, all on story 0."""
    return build_voxel_graph(
        [((float(i), 0.0, 0.0), (1.0, 1.0, 1.0), 0) for i in range(n)], site_area
    )


def one_story_program(types, door_edges):
    return build_program_graph([list(types)], door_edges)


def hard_assignment(vg, mapping: dict[int, int | None], pg):
    """Hard assignment from voxel id -> program node id (None = unused)."""
    story_nodes = {}
    for n in pg.nodes:
        if not n.is_master:
            story_nodes.setdefault(n.story, n.id)
    mask, att = [], []
    for k in range(vg.num_nodes):
        pid = mapping.get(k)
        if pid is None:
            mask.append(0.0)
            att.append(((story_nodes[vg.node(k).story], 1.0),))
        else:
            mask.append(1.0)
            att.append(((pid, 1.0),))
    return Assignment(mask=tuple(mask), att=tuple(att), hard=True)


def make_design(vg, pg, mapping):
    return VolumetricDesign(voxels=vg, program=pg, assignment=hard_assignment(vg, mapping, pg))
