"""Seeded parametric generator of (program graph, labeled voxel graph) pairs.

Designs are generated first and the conditioning inputs (FAR limit, target
program ratios, program graph) are read off the finished design afterwards,
so every record satisfies its own conditions exactly.  Layout rules:

  R1  a vertical core (stairs + elevator, optionally restroom/mechanical)
      occupies the same footprint cells on every story;
  R2  every used cell is reachable from a lobby/corridor cell of its story
      through used cells;
  R3  story 0 contains at least one lobby/corridor cell;
  R4  program edges mirror realized adjacencies: door edges iff two rooms
      share a face within a story, vertical edges iff core rooms stack;
  R5  all remaining used cells are offices; boundary cells may be left
      unused per story group to vary the massing.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import jsonio
from .core import (
    EdgeKind,
    MASTER_STORY,
    ProgramEdge,
    ProgramGraph,
    ProgramNode,
    ProgramType,
    ValidationError,
    VoxelGraph,
    VoxelNode,
    build_voxel_graph,
    validate_program_graph,
    validate_voxel_graph,
)


class GenerationError(RuntimeError):
    """Layout rules could not be satisfied after the retry budget."""


class CorePattern(enum.Enum):
    SINGLE_CORE = "single_core"
    TWIN_CORE = "twin_core"


@dataclass(frozen=True)
class SynthConfig:
    site_bounds: tuple[float, float, float] = (40.0, 40.0, 50.0)
    stories_range: tuple[int, int] = (3, 7)
    partition_counts: tuple[int, int] = (3, 5)
    voxel_dims_range: tuple[tuple[float, float], ...] = ((4.0, 9.0), (4.0, 9.0), (3.0, 4.5))
    first_story_height_boost: float = 1.25
    core_pattern: CorePattern = CorePattern.SINGLE_CORE
    rng_seed: int = 0

    @property
    def site_area(self) -> float:
        return self.site_bounds[0] * self.site_bounds[1]


def validate_config(cfg: SynthConfig) -> None:
    bx, by, bz = cfg.site_bounds
    if min(cfg.site_bounds) <= 0:
        raise ValidationError(f"site bounds must be positive, got {cfg.site_bounds}")
    lo, hi = cfg.stories_range
    if not (1 <= lo <= hi):
        raise ValidationError(f"empty stories range {cfg.stories_range}")
    plo, phi = cfg.partition_counts
    if not (2 <= plo <= phi):
        raise ValidationError(f"partition counts must span at least 2 cells, got {cfg.partition_counts}")
    for axis, (dlo, dhi) in enumerate(cfg.voxel_dims_range):
        if not (0 < dlo <= dhi <= cfg.site_bounds[axis]):
            raise ValidationError(f"voxel dims range on axis {axis} is empty or exceeds the site")
    if cfg.first_story_height_boost < 1.0:
        raise ValidationError("first_story_height_boost must be >= 1")
    if phi * cfg.voxel_dims_range[0][0] > bx or phi * cfg.voxel_dims_range[1][0] > by:
        raise ValidationError("partition at minimum cell size does not fit the site footprint")
    zlo = cfg.voxel_dims_range[2][0]
    if (cfg.first_story_height_boost + hi - 1) * zlo > bz:
        raise ValidationError("maximum story count at minimum height exceeds the site height")


@dataclass(frozen=True)
class Partition:
    """Non-uniform grid: cut positions per horizontal axis, per-story heights."""

    x_cuts: tuple[float, ...]
    y_cuts: tuple[float, ...]
    story_heights: tuple[float, ...]

    @property
    def nx(self) -> int:
        return len(self.x_cuts) - 1

    @property
    def ny(self) -> int:
        return len(self.y_cuts) - 1

    @property
    def num_stories(self) -> int:
        return len(self.story_heights)

    def story_base(self, s: int) -> float:
        return float(sum(self.story_heights[:s]))


def sample_partition(rng: np.random.Generator, cfg: SynthConfig) -> Partition:
    """Draw a grid partition that fits the site by construction."""
    validate_config(cfg)
    bx, by, bz = cfg.site_bounds

    def axis_cuts(count_range, width_range, bound):
        n = int(rng.integers(count_range[0], count_range[1] + 1))
        hi = min(width_range[1], bound / n)
        widths = rng.uniform(width_range[0], hi, size=n)
        return tuple(np.concatenate(([0.0], np.cumsum(widths))))

    x_cuts = axis_cuts(cfg.partition_counts, cfg.voxel_dims_range[0], bx)
    y_cuts = axis_cuts(cfg.partition_counts, cfg.voxel_dims_range[1], by)

    n_s = int(rng.integers(cfg.stories_range[0], cfg.stories_range[1] + 1))
    zlo, zhi = cfg.voxel_dims_range[2]
    boost = cfg.first_story_height_boost
    h = float(rng.uniform(zlo, min(zhi, bz / (boost + n_s - 1))))
    heights = (h * boost,) + (h,) * (n_s - 1)
    return Partition(x_cuts=x_cuts, y_cuts=y_cuts, story_heights=heights)


@dataclass(frozen=True)
class SynthRecord:
    program_graph: ProgramGraph
    voxel_graph: VoxelGraph
    far_actual: float
    tpr_actual: dict[ProgramType, float]


# ---------------------------------------------------------------------------
# Layout


def _core_cells(rng, nx: int, ny: int, j_core: int, pattern: CorePattern):
    """Fixed (cell -> type) map for the vertical core; same on every story."""
    core: dict[tuple[int, int], ProgramType] = {}
    if pattern is CorePattern.TWIN_CORE and nx >= 4:
        core[(0, j_core)] = ProgramType.STAIRS
        core[(1, j_core)] = ProgramType.ELEVATOR
        core[(nx - 2, j_core)] = ProgramType.ELEVATOR
        core[(nx - 1, j_core)] = ProgramType.STAIRS
        if nx >= 5 and rng.random() < 0.5:
            core[(2, j_core)] = ProgramType.RESTROOM
    else:
        i0 = int(rng.integers(0, nx - 1))
        core[(i0, j_core)] = ProgramType.STAIRS
        core[(i0 + 1, j_core)] = ProgramType.ELEVATOR
        if i0 - 1 >= 0 and rng.random() < 0.5:
            core[(i0 - 1, j_core)] = ProgramType.RESTROOM
        if i0 + 2 <= nx - 1 and rng.random() < 0.35:
            core[(i0 + 2, j_core)] = ProgramType.MECHANICAL
    return core


def _story_groups(rng, n_s: int):
    """Split stories into 1-3 contiguous groups (massing setbacks)."""
    max_groups = min(3, n_s)
    n_groups = int(rng.integers(1, max_groups + 1))
    if n_groups == 1:
        return [range(0, n_s)]
    cuts = sorted(rng.choice(np.arange(1, n_s), size=n_groups - 1, replace=False).tolist())
    bounds = [0] + cuts + [n_s]
    return [range(bounds[g], bounds[g + 1]) for g in range(n_groups)]


def _group_rects(rng, groups, nx, ny, core, j_c, j_core):
    """Nested active rectangles per group; each keeps corridor row and core."""
    core_is = [i for i, _ in core]
    i_keep = (min(core_is), max(core_is))
    j_keep = (min(j_c, j_core), max(j_c, j_core))
    rects = []
    rect = (0, nx - 1, 0, ny - 1)
    for g, _ in enumerate(groups):
        if g > 0:
            i_lo = min(i_keep[0], rect[0] + int(rng.integers(0, 2)))
            i_hi = max(i_keep[1], rect[1] - int(rng.integers(0, 2)))
            j_lo = min(j_keep[0], rect[2] + int(rng.integers(0, 2)))
            j_hi = max(j_keep[1], rect[3] - int(rng.integers(0, 2)))
            rect = (i_lo, i_hi, j_lo, j_hi)
        rects.append(rect)
    return rects


def _layout_stories(rng, part: Partition, cfg: SynthConfig):
    """Per-story (cell -> type) maps satisfying rules R1, R3, R5."""
    nx, ny = part.nx, part.ny
    j_c = int(rng.integers(1, ny - 1)) if ny >= 3 else int(rng.integers(0, ny))
    j_core = j_c - 1 if j_c >= 1 else j_c + 1
    core = _core_cells(rng, nx, ny, j_core, cfg.core_pattern)
    groups = _story_groups(rng, part.num_stories)
    rects = _group_rects(rng, groups, nx, ny, core, j_c, j_core)

    extra_lobby_rows = [j for j in (j_c - 1, j_c + 1) if 0 <= j < ny]
    lobby_spread = rng.random(size=(len(extra_lobby_rows), nx)) < 0.3

    stories = []
    for g, group in enumerate(groups):
        i_lo, i_hi, j_lo, j_hi = rects[g]
        for s in group:
            cells: dict[tuple[int, int], ProgramType] = {}
            for j in range(j_lo, j_hi + 1):
                for i in range(i_lo, i_hi + 1):
                    if (i, j) in core:
                        cells[(i, j)] = core[(i, j)]
                    elif j == j_c:
                        cells[(i, j)] = ProgramType.LOBBY_CORRIDOR
                    else:
                        cells[(i, j)] = ProgramType.OFFICE
            if s == 0:
                # Entrance story gets a wider lobby (R3 already holds via the
                # corridor row; this only varies the ground layout).
                for r, j in enumerate(extra_lobby_rows):
                    for i in range(i_lo, i_hi + 1):
                        if lobby_spread[r, i] and cells.get((i, j)) is ProgramType.OFFICE:
                            cells[(i, j)] = ProgramType.LOBBY_CORRIDOR
            stories.append(cells)
    return stories


def _circulation_ok(cells: dict[tuple[int, int], ProgramType]) -> bool:
    """R2: every used cell reaches a lobby cell through used cells."""
    lobby = [c for c, t in cells.items() if t is ProgramType.LOBBY_CORRIDOR]
    if not lobby:
        return False
    seen = set(lobby)
    frontier = list(lobby)
    while frontier:
        i, j = frontier.pop()
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = (i + d[0], j + d[1])
            if nb in cells and nb not in seen:
                seen.add(nb)
                frontier.append(nb)
    return len(seen) == len(cells)


def _clusters(cells: dict[tuple[int, int], ProgramType]):
    """Maximal connected same-type cell groups, in row-major discovery order."""
    remaining = dict(cells)
    order = sorted(remaining, key=lambda c: (c[1], c[0]))
    clusters = []
    assigned: set[tuple[int, int]] = set()
    for start in order:
        if start in assigned:
            continue
        t = remaining[start]
        comp = {start}
        frontier = [start]
        while frontier:
            i, j = frontier.pop()
            for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nb = (i + d[0], j + d[1])
                if nb in remaining and nb not in comp and remaining[nb] is t:
                    comp.add(nb)
                    frontier.append(nb)
        assigned |= comp
        clusters.append((t, frozenset(comp)))
    return clusters


def _build_program_graph(stories) -> tuple[ProgramGraph, list[dict[tuple[int, int], int]]]:
    """Program graph from realized layouts (R4) plus per-story cell -> node maps."""
    nodes: list[ProgramNode] = []
    cell_to_node: list[dict[tuple[int, int], int]] = []
    clusters_by_story = []
    for s, cells in enumerate(stories):
        mapping: dict[tuple[int, int], int] = {}
        story_clusters = []
        for t, comp in _clusters(cells):
            nid = len(nodes)
            nodes.append(ProgramNode(id=nid, story=s, ptype=t))
            for c in comp:
                mapping[c] = nid
            story_clusters.append((nid, t, comp))
        cell_to_node.append(mapping)
        clusters_by_story.append(story_clusters)

    edges: list[ProgramEdge] = []
    seen: set[tuple[int, int]] = set()

    def add_edge(a: int, b: int, kind: EdgeKind):
        key = (min(a, b), max(a, b))
        if key not in seen:
            seen.add(key)
            edges.append(ProgramEdge(a, b, kind))

    for s, cells in enumerate(stories):
        mapping = cell_to_node[s]
        for (i, j) in cells:
            for d in ((1, 0), (0, 1)):
                nb = (i + d[0], j + d[1])
                if nb in cells and mapping[nb] != mapping[(i, j)]:
                    add_edge(mapping[(i, j)], mapping[nb], EdgeKind.DOOR)

    for s in range(len(stories) - 1):
        for nid_lo, t_lo, comp_lo in clusters_by_story[s]:
            if t_lo not in (ProgramType.STAIRS, ProgramType.ELEVATOR):
                continue
            for nid_hi, t_hi, comp_hi in clusters_by_story[s + 1]:
                if t_hi is t_lo and comp_lo & comp_hi:
                    add_edge(nid_lo, nid_hi, EdgeKind.VERTICAL)

    occurring = sorted({n.ptype for n in nodes}, key=lambda t: t.index)
    n_inst = len(nodes)
    for t in occurring:
        master = ProgramNode(id=len(nodes), story=MASTER_STORY, ptype=t, is_master=True)
        nodes.append(master)
        for n in nodes[:n_inst]:
            if n.ptype is t:
                add_edge(n.id, master.id, EdgeKind.MASTER)

    edges.sort(key=lambda e: e.pair)
    pg = ProgramGraph(nodes=tuple(nodes), edges=tuple(edges), far_limit=1.0,
                      tpr={t: 1.0 / len(occurring) for t in occurring})
    return pg, cell_to_node


def _build_voxel_graph(part: Partition, cfg: SynthConfig, stories, cell_to_node) -> VoxelGraph:
    """Voxels for every grid cell; unused cells stay unlabeled (design space)."""
    cuboids = []
    for s in range(part.num_stories):
        z = part.story_base(s)
        h = part.story_heights[s]
        for j in range(part.ny):
            for i in range(part.nx):
                pos = (float(part.x_cuts[i]), float(part.y_cuts[j]), z)
                dim = (
                    float(part.x_cuts[i + 1] - part.x_cuts[i]),
                    float(part.y_cuts[j + 1] - part.y_cuts[j]),
                    float(h),
                )
                cuboids.append((pos, dim, s))
    vg = build_voxel_graph(cuboids, site_area=cfg.site_area)

    labeled = []
    for n in vg.nodes:
        s = n.story
        cell = (n.id % part.nx, (n.id // part.nx) % part.ny)
        t = stories[s].get(cell)
        if t is None:
            labeled.append(n)
        else:
            labeled.append(replace(n, label=t, assigned_program=cell_to_node[s][cell]))
    return replace(vg, nodes=tuple(labeled))


# ---------------------------------------------------------------------------
# Conditions


def conditions_from_types(vg: VoxelGraph, types) -> tuple[float, dict[ProgramType, float]]:
    """FAR and per-type area ratios for a voxel graph with per-voxel types.

    ``types[k]`` is the program type of voxel k or None when unused.  FAR is
    the summed footprint area of used voxels over the parcel area.
    """
    used_area = 0.0
    per_type: dict[ProgramType, float] = {}
    for n, t in zip(vg.nodes, types):
        if t is None:
            continue
        area = n.footprint_area
        used_area += area
        per_type[t] = per_type.get(t, 0.0) + area
    if used_area == 0.0:
        raise ValidationError("conditions are undefined for a design with no used voxels")
    far = used_area / vg.site_area
    tpr = {t: a / used_area for t, a in sorted(per_type.items(), key=lambda kv: kv[0].index)}
    return far, tpr


def compute_conditions(vg: VoxelGraph) -> tuple[float, dict[ProgramType, float]]:
    """Conditions read off ground-truth labels."""
    return conditions_from_types(vg, [n.label for n in vg.nodes])


# ---------------------------------------------------------------------------
# Entry points


_MAX_RETRIES = 16


def generate_design(rng: np.random.Generator, cfg: SynthConfig) -> SynthRecord:
    """Generate one fully labeled design; conditions are computed post hoc."""
    validate_config(cfg)
    for _ in range(_MAX_RETRIES):
        part = sample_partition(rng, cfg)
        stories = _layout_stories(rng, part, cfg)
        if not all(_circulation_ok(cells) for cells in stories):
            continue
        pg, cell_to_node = _build_program_graph(stories)
        vg = _build_voxel_graph(part, cfg, stories, cell_to_node)
        far_actual, tpr_actual = compute_conditions(vg)
        pg = pg.with_conditions(far_actual, tpr_actual)
        validate_program_graph(pg)
        validate_voxel_graph(vg)
        return SynthRecord(program_graph=pg, voxel_graph=vg,
                           far_actual=far_actual, tpr_actual=tpr_actual)
    raise GenerationError(f"no circulation-valid layout after {_MAX_RETRIES} attempts")


def config_to_dict(cfg: SynthConfig) -> dict:
    d = asdict(cfg)
    d["core_pattern"] = cfg.core_pattern.value
    return d


def config_from_dict(d: dict) -> SynthConfig:
    known = {f for f in SynthConfig.__dataclass_fields__}
    unknown = set(d) - known
    if unknown:
        raise ValidationError(f"unknown synth config keys: {sorted(unknown)}")
    kwargs = dict(d)
    if "core_pattern" in kwargs:
        kwargs["core_pattern"] = CorePattern(kwargs["core_pattern"])
    if "site_bounds" in kwargs:
        kwargs["site_bounds"] = tuple(kwargs["site_bounds"])
    if "stories_range" in kwargs:
        kwargs["stories_range"] = tuple(kwargs["stories_range"])
    if "partition_counts" in kwargs:
        kwargs["partition_counts"] = tuple(kwargs["partition_counts"])
    if "voxel_dims_range" in kwargs:
        kwargs["voxel_dims_range"] = tuple(tuple(r) for r in kwargs["voxel_dims_range"])
    cfg = SynthConfig(**kwargs)
    validate_config(cfg)
    return cfg


def generate_dataset(n: int, cfg: SynthConfig, out_dir) -> dict:
    """Write n records plus a manifest; each record regenerates from its seed."""
    if n < 1:
        raise ValidationError(f"dataset size must be >= 1, got {n}")
    os.makedirs(out_dir, exist_ok=True)
    master = np.random.default_rng(cfg.rng_seed)
    seeds: list[int] = []
    while len(seeds) < n:
        s = int(master.integers(0, 2**63 - 1))
        if s not in seeds:
            seeds.append(s)
    entries = []
    for seed in seeds:
        record = generate_design(np.random.default_rng(seed), cfg)
        fname = f"record_{seed}.json"
        path = os.path.join(out_dir, fname)
        try:
            jsonio.save(record, path)
        except OSError as err:
            raise OSError(f"failed to write record to {path}: {err}") from err
        entries.append({"seed": seed, "file": fname})
    manifest = {"config": config_to_dict(cfg), "n": n, "records": entries}
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_dataset(data_dir) -> list[SynthRecord]:
    """Read records in manifest order."""
    manifest_path = os.path.join(data_dir, "manifest.json")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    records = []
    for entry in manifest["records"]:
        records.append(jsonio.load(os.path.join(data_dir, entry["file"])))
    return records
