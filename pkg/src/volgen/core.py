"""Domain types for program graphs, voxel graphs, and volumetric designs.

A building is described by two coupled graphs: a hierarchical program graph
(rooms, door/opening edges, vertical circulation chains, per-type master
nodes) and a voxel graph (an irregular lattice of axis-aligned cuboids with
face-adjacency edges).  A generator output is an Assignment: a per-voxel
usage mask plus an attention distribution over the program nodes of the
voxel's story.  All types are immutable after construction.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

# Geometric tolerances (meters / cubic meters).  Face contact is detected up
# to COORD_TOL of coplanarity; cuboid pairs intersecting by more than
# VOLUME_TOL are rejected as overlapping.
COORD_TOL = 1e-6
VOLUME_TOL = 1e-9

TPR_TOL = 1e-6
ATT_ROW_TOL = 1e-5

# Story index stored on master program nodes (they belong to no story).
MASTER_STORY = -1


class ValidationError(ValueError):
    """A graph, assignment, or design violates a structural invariant."""


class GeometryError(ValidationError):
    """Cuboid geometry is inconsistent (overlap, degenerate dimensions)."""


class ProgramType(enum.Enum):
    """The six program (room) types a voxel can be assigned to."""

    LOBBY_CORRIDOR = "lobby_corridor"
    RESTROOM = "restroom"
    STAIRS = "stairs"
    ELEVATOR = "elevator"
    OFFICE = "office"
    MECHANICAL = "mechanical"

    @property
    def index(self) -> int:
        return _TYPE_INDEX[self]

    def onehot(self) -> np.ndarray:
        v = np.zeros(NUM_TYPES)
        v[self.index] = 1.0
        return v


NUM_TYPES = 6
PROGRAM_TYPES = tuple(ProgramType)
_TYPE_INDEX = {t: i for i, t in enumerate(PROGRAM_TYPES)}

# Types that chain vertically between adjacent stories.
VERTICAL_TYPES = (ProgramType.STAIRS, ProgramType.ELEVATOR)

# Column order of the 7-dim per-voxel label vector: the six types followed
# by the "unused" component.
LABEL_DIM = NUM_TYPES + 1


class EdgeKind(enum.Enum):
    DOOR = "door"
    VERTICAL = "vertical"
    MASTER = "master"


@dataclass(frozen=True)
class ProgramNode:
    id: int
    story: int
    ptype: ProgramType
    is_master: bool = False


@dataclass(frozen=True)
class ProgramEdge:
    """Undirected program-graph edge, stored with the smaller id first."""

    a: int
    b: int
    kind: EdgeKind

    def __post_init__(self):
        if self.a > self.b:
            lo, hi = self.b, self.a
            object.__setattr__(self, "a", lo)
            object.__setattr__(self, "b", hi)

    @property
    def pair(self) -> tuple[int, int]:
        return (self.a, self.b)


@dataclass(frozen=True)
class ProgramGraph:
    """Hierarchical bubble diagram with FAR limit and target program ratios."""

    nodes: tuple[ProgramNode, ...]
    edges: tuple[ProgramEdge, ...]
    far_limit: float
    tpr: dict[ProgramType, float]

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def node(self, nid: int) -> ProgramNode:
        return self.nodes[nid]

    def instance_nodes(self) -> list[ProgramNode]:
        return [n for n in self.nodes if not n.is_master]

    def max_story(self) -> int:
        return max((n.story for n in self.nodes if not n.is_master), default=0)

    def nodes_on_story(self, story: int) -> list[ProgramNode]:
        return [n for n in self.nodes if not n.is_master and n.story == story]

    def with_conditions(self, far_limit: float, tpr: dict[ProgramType, float]) -> "ProgramGraph":
        pg = replace(self, far_limit=far_limit, tpr=dict(tpr))
        validate_program_graph(pg)
        return pg


@dataclass(frozen=True)
class VoxelNode:
    """Axis-aligned cuboid: min-corner position and extents, in meters."""

    id: int
    position: tuple[float, float, float]
    dimension: tuple[float, float, float]
    story: int
    label: ProgramType | None = None
    assigned_program: int | None = None

    @property
    def footprint_area(self) -> float:
        return self.dimension[0] * self.dimension[1]

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple(p + d / 2.0 for p, d in zip(self.position, self.dimension))

    def interval(self, axis: int) -> tuple[float, float]:
        return (self.position[axis], self.position[axis] + self.dimension[axis])


@dataclass(frozen=True)
class VoxelGraph:
    nodes: tuple[VoxelNode, ...]
    edges: tuple[tuple[int, int], ...]
    site_area: float

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def node(self, vid: int) -> VoxelNode:
        return self.nodes[vid]

    def max_story(self) -> int:
        return max(n.story for n in self.nodes)

    def stories(self) -> list[int]:
        return sorted({n.story for n in self.nodes})


@dataclass(frozen=True)
class Assignment:
    """Generator output: per-voxel usage mask plus attention rows.

    ``att[k]`` holds ``(program_node_id, weight)`` pairs restricted to the
    non-master program nodes on voxel ``k``'s story; absent entries are
    exactly zero.  ``hard`` marks one-hot rows with a binary mask.
    """

    mask: tuple[float, ...]
    att: tuple[tuple[tuple[int, float], ...], ...]
    hard: bool = False

    def att_row(self, k: int) -> dict[int, float]:
        return dict(self.att[k])

    def assigned_node(self, k: int) -> int:
        """Program node id with the largest attention weight (lowest id wins ties)."""
        row = self.att[k]
        if not row:
            raise ValidationError(f"voxel {k} has an empty attention row")
        best = max(row, key=lambda e: (e[1], -e[0]))
        return best[0]


@dataclass(frozen=True)
class VolumetricDesign:
    """A voxel graph, its conditioning program graph, and an assignment."""

    voxels: VoxelGraph
    program: ProgramGraph
    assignment: Assignment


# ---------------------------------------------------------------------------
# Validation


def _check_dense_ids(items, what: str) -> None:
    if not items:
        raise ValidationError(f"{what} graph must be non-empty")
    ids = [n.id for n in items]
    if ids != list(range(len(items))):
        raise ValidationError(f"{what} node ids must be dense 0..N-1 in order, got {ids[:8]}...")


def validate_program_graph(pg: ProgramGraph) -> None:
    _check_dense_ids(pg.nodes, "program")

    instance_types = {n.ptype for n in pg.nodes if not n.is_master}
    masters_by_type: dict[ProgramType, list[ProgramNode]] = {}
    for n in pg.nodes:
        if n.is_master:
            masters_by_type.setdefault(n.ptype, []).append(n)
            if n.story != MASTER_STORY:
                raise ValidationError(f"master node {n.id} must have story {MASTER_STORY}")
        elif n.story < 0:
            raise ValidationError(f"node {n.id} has negative story {n.story}")

    for t in instance_types:
        found = masters_by_type.get(t, [])
        if len(found) != 1:
            raise ValidationError(f"type {t.value} needs exactly one master node, found {len(found)}")
    for t, found in masters_by_type.items():
        if t not in instance_types:
            raise ValidationError(f"master node for absent type {t.value}")

    seen_pairs: set[tuple[int, int]] = set()
    for e in pg.edges:
        if e.a == e.b:
            raise ValidationError(f"self-loop edge on node {e.a}")
        if not (0 <= e.a < pg.num_nodes and 0 <= e.b < pg.num_nodes):
            raise ValidationError(f"edge ({e.a},{e.b}) references missing node")
        if e.pair in seen_pairs:
            raise ValidationError(f"duplicate edge ({e.a},{e.b})")
        seen_pairs.add(e.pair)
        na, nb = pg.node(e.a), pg.node(e.b)
        if e.kind is EdgeKind.DOOR:
            if na.is_master or nb.is_master:
                raise ValidationError(f"door edge ({e.a},{e.b}) touches a master node")
            if na.story != nb.story:
                raise ValidationError(f"door edge ({e.a},{e.b}) crosses stories {na.story}/{nb.story}")
        elif e.kind is EdgeKind.VERTICAL:
            if na.is_master or nb.is_master:
                raise ValidationError(f"vertical edge ({e.a},{e.b}) touches a master node")
            if na.ptype not in VERTICAL_TYPES or na.ptype != nb.ptype:
                raise ValidationError(
                    f"vertical edge ({e.a},{e.b}) must join two stairs or two elevator nodes"
                )
            if abs(na.story - nb.story) != 1:
                raise ValidationError(f"vertical edge ({e.a},{e.b}) joins non-adjacent stories")
        elif e.kind is EdgeKind.MASTER:
            if na.is_master == nb.is_master:
                raise ValidationError(f"master edge ({e.a},{e.b}) must join a master to an instance")
            master, inst = (na, nb) if na.is_master else (nb, na)
            if master.ptype != inst.ptype:
                raise ValidationError(f"master edge ({e.a},{e.b}) joins different types")

    if pg.far_limit <= 0:
        raise ValidationError(f"far_limit must be positive, got {pg.far_limit}")
    total = 0.0
    for t, r in pg.tpr.items():
        if not isinstance(t, ProgramType):
            raise ValidationError(f"tpr key {t!r} is not a program type")
        if r < 0 or r > 1:
            raise ValidationError(f"tpr[{t.value}] = {r} outside [0,1]")
        total += r
    if abs(total - 1.0) > TPR_TOL:
        raise ValidationError(f"tpr ratios sum to {total}, expected 1")


def face_contact_area(a: VoxelNode, b: VoxelNode, tol: float = COORD_TOL) -> float:
    """Contact area of two cuboids touching along an axis plane, else 0.

    Contact requires coplanar opposing faces (within ``tol``) and strictly
    positive overlap on both remaining axes.
    """
    for axis in range(3):
        a_lo, a_hi = a.interval(axis)
        b_lo, b_hi = b.interval(axis)
        if abs(a_hi - b_lo) <= tol or abs(b_hi - a_lo) <= tol:
            others = [ax for ax in range(3) if ax != axis]
            area = 1.0
            for ax in others:
                lo = max(a.interval(ax)[0], b.interval(ax)[0])
                hi = min(a.interval(ax)[1], b.interval(ax)[1])
                if hi - lo <= tol:
                    area = 0.0
                    break
                area *= hi - lo
            if area > 0.0:
                return area
    return 0.0


def overlap_volume(a: VoxelNode, b: VoxelNode) -> float:
    vol = 1.0
    for axis in range(3):
        lo = max(a.interval(axis)[0], b.interval(axis)[0])
        hi = min(a.interval(axis)[1], b.interval(axis)[1])
        if hi <= lo:
            return 0.0
        vol *= hi - lo
    return vol


def validate_voxel_graph(vg: VoxelGraph) -> None:
    _check_dense_ids(vg.nodes, "voxel")
    if vg.site_area <= 0:
        raise ValidationError(f"site_area must be positive, got {vg.site_area}")
    for n in vg.nodes:
        if any(d <= 0 for d in n.dimension):
            raise GeometryError(f"voxel {n.id} has non-positive dimension {n.dimension}")
        if n.story < 0:
            raise ValidationError(f"voxel {n.id} has negative story {n.story}")
    for a, b in itertools.combinations(vg.nodes, 2):
        if overlap_volume(a, b) > VOLUME_TOL:
            raise GeometryError(f"voxels {a.id} and {b.id} overlap in volume")
    seen: set[tuple[int, int]] = set()
    for a, b in vg.edges:
        if a >= b:
            raise ValidationError(f"edge ({a},{b}) must be stored min-id first")
        if not (0 <= a < vg.num_nodes and 0 <= b < vg.num_nodes):
            raise ValidationError(f"edge ({a},{b}) references missing voxel")
        if (a, b) in seen:
            raise ValidationError(f"duplicate edge ({a},{b})")
        seen.add((a, b))
        if face_contact_area(vg.node(a), vg.node(b)) <= 0.0:
            raise GeometryError(f"edge ({a},{b}) joins voxels that do not share a face")


def validate_assignment(vg: VoxelGraph, pg: ProgramGraph, a: Assignment) -> None:
    if len(a.mask) != vg.num_nodes or len(a.att) != vg.num_nodes:
        raise ValidationError("assignment size does not match voxel graph")
    story_nodes = {s: {n.id for n in pg.nodes_on_story(s)} for s in vg.stories()}
    for k, voxel in enumerate(vg.nodes):
        m = a.mask[k]
        if not (0.0 <= m <= 1.0):
            raise ValidationError(f"mask[{k}] = {m} outside [0,1]")
        if a.hard and m not in (0.0, 1.0):
            raise ValidationError(f"hard assignment requires binary mask, mask[{k}] = {m}")
        allowed = story_nodes.get(voxel.story, set())
        row = a.att[k]
        ids = [pid for pid, _ in row]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"att row {k} repeats a program node")
        for pid, w in row:
            if pid not in allowed:
                raise ValidationError(
                    f"att[{k}] puts weight on program node {pid} outside story {voxel.story}"
                )
            if w < 0:
                raise ValidationError(f"att[{k},{pid}] = {w} is negative")
        total = sum(w for _, w in row)
        if abs(total - 1.0) > ATT_ROW_TOL:
            raise ValidationError(f"att row {k} sums to {total}, expected 1")
        if a.hard and any(w not in (0.0, 1.0) for _, w in row):
            raise ValidationError(f"hard assignment requires one-hot att rows, row {k} is soft")


def validate_design(design: VolumetricDesign) -> None:
    validate_program_graph(design.program)
    validate_voxel_graph(design.voxels)
    validate_assignment(design.voxels, design.program, design.assignment)
    for n in design.voxels.nodes:
        if n.assigned_program is not None:
            if not (0 <= n.assigned_program < design.program.num_nodes):
                raise ValidationError(f"voxel {n.id} assigned to missing program node")
            p = design.program.node(n.assigned_program)
            if p.is_master:
                raise ValidationError(f"voxel {n.id} assigned to master node {p.id}")
            if p.story != n.story:
                raise ValidationError(
                    f"voxel {n.id} on story {n.story} assigned to node {p.id} on story {p.story}"
                )


# ---------------------------------------------------------------------------
# Builders


def build_program_graph(
    rooms_per_story: list[list[ProgramType]],
    door_edges: list[tuple[int, int]],
    far_limit: float = 1.0,
    tpr: dict[ProgramType, float] | None = None,
) -> ProgramGraph:
    """Stack per-story room lists into a hierarchical program graph.

    Instance nodes get dense ids story by story in input order.  Besides the
    given intra-story door edges, the builder adds vertical chains between
    same-type stair/elevator nodes on adjacent stories and one master node
    per occurring type connected to all its instances.  ``far_limit``/``tpr``
    default to 1.0 and a uniform ratio over occurring types; callers set the
    real conditions via ``with_conditions``.
    """
    if not rooms_per_story or any(not story for story in rooms_per_story):
        raise ValidationError("every story must list at least one room")

    nodes: list[ProgramNode] = []
    for story, rooms in enumerate(rooms_per_story):
        for ptype in rooms:
            nodes.append(ProgramNode(id=len(nodes), story=story, ptype=ptype))
    n_inst = len(nodes)

    edges: list[ProgramEdge] = []
    seen: set[tuple[int, int]] = set()
    for a, b in door_edges:
        if a == b:
            raise ValidationError(f"door edge ({a},{b}) is a self-loop")
        if not (0 <= a < n_inst and 0 <= b < n_inst):
            raise ValidationError(f"door edge ({a},{b}) references missing room")
        if nodes[a].story != nodes[b].story:
            raise ValidationError(
                f"door edge ({a},{b}) crosses stories {nodes[a].story}/{nodes[b].story}"
            )
        key = (min(a, b), max(a, b))
        if key in seen:
            raise ValidationError(f"duplicate door edge ({a},{b})")
        seen.add(key)
        edges.append(ProgramEdge(a, b, EdgeKind.DOOR))

    for story in range(len(rooms_per_story) - 1):
        for vt in VERTICAL_TYPES:
            below = [n for n in nodes if n.story == story and n.ptype is vt]
            above = [n for n in nodes if n.story == story + 1 and n.ptype is vt]
            for lo in below:
                for hi in above:
                    edges.append(ProgramEdge(lo.id, hi.id, EdgeKind.VERTICAL))

    occurring = sorted({n.ptype for n in nodes}, key=lambda t: t.index)
    for ptype in occurring:
        master = ProgramNode(id=len(nodes), story=MASTER_STORY, ptype=ptype, is_master=True)
        nodes.append(master)
        for n in nodes[:n_inst]:
            if n.ptype is ptype:
                edges.append(ProgramEdge(n.id, master.id, EdgeKind.MASTER))

    if tpr is None:
        tpr = {t: 1.0 / len(occurring) for t in occurring}
    edges.sort(key=lambda e: e.pair)
    pg = ProgramGraph(nodes=tuple(nodes), edges=tuple(edges), far_limit=far_limit, tpr=dict(tpr))
    validate_program_graph(pg)
    return pg


def build_voxel_graph(
    cuboids: list[tuple[tuple[float, float, float], tuple[float, float, float], int]],
    site_area: float,
) -> VoxelGraph:
    """Build a voxel graph from (position, dimension, story) cuboids.

    Node order follows input order; edges are all face-adjacent pairs.
    Raises GeometryError when two cuboids overlap in volume.
    """
    nodes = tuple(
        VoxelNode(id=i, position=tuple(pos), dimension=tuple(dim), story=story)
        for i, (pos, dim, story) in enumerate(cuboids)
    )
    for a, b in itertools.combinations(nodes, 2):
        if overlap_volume(a, b) > VOLUME_TOL:
            raise GeometryError(f"voxels {a.id} and {b.id} overlap in volume")
    edges = []
    for a, b in itertools.combinations(nodes, 2):
        if face_contact_area(a, b) > 0.0:
            edges.append((a.id, b.id))
    vg = VoxelGraph(nodes=nodes, edges=tuple(edges), site_area=site_area)
    validate_voxel_graph(vg)
    return vg


# ---------------------------------------------------------------------------
# Assignment helpers


def assignment_to_labels(vg: VoxelGraph, pg: ProgramGraph, a: Assignment) -> np.ndarray:
    """Per-voxel 7-dim label rows: mask-scaled type probabilities + unused.

    Row k is ``[mask_k * sum_i att_{k,i} * onehot(ptype(i)), 1 - mask_k]``,
    which always sums to 1.
    """
    validate_assignment(vg, pg, a)
    labels = np.zeros((vg.num_nodes, LABEL_DIM))
    for k in range(vg.num_nodes):
        m = a.mask[k]
        for pid, w in a.att[k]:
            labels[k, pg.node(pid).ptype.index] += m * w
        labels[k, NUM_TYPES] = 1.0 - m
    return labels


def assignment_from_labels(vg: VoxelGraph, pg: ProgramGraph) -> Assignment:
    """Hard assignment read off ground-truth voxel labels/program refs.

    Used voxels point at their stored program node; unused voxels get mask 0
    and a placeholder one-hot row on the lowest-id node of their story.
    """
    story_nodes = {s: sorted(n.id for n in pg.nodes_on_story(s)) for s in vg.stories()}
    mask = []
    att = []
    for n in vg.nodes:
        candidates = story_nodes.get(n.story, [])
        if not candidates:
            raise ValidationError(f"story {n.story} has voxels but no program nodes")
        if n.assigned_program is not None:
            if not (0 <= n.assigned_program < pg.num_nodes):
                raise ValidationError(f"voxel {n.id} assigned to missing program node")
            target = pg.node(n.assigned_program)
            if target.is_master:
                raise ValidationError(f"voxel {n.id} assigned to master node {target.id}")
            mask.append(1.0)
            att.append(((n.assigned_program, 1.0),))
        else:
            mask.append(0.0)
            att.append(((candidates[0], 1.0),))
    a = Assignment(mask=tuple(mask), att=tuple(att), hard=True)
    validate_assignment(vg, pg, a)
    return a


def apply_assignment(vg: VoxelGraph, pg: ProgramGraph, a: Assignment) -> VoxelGraph:
    """Write a hard assignment into voxel labels / program references."""
    if not a.hard:
        raise ValidationError("only hard assignments can be written into a voxel graph")
    validate_assignment(vg, pg, a)
    nodes = []
    for k, n in enumerate(vg.nodes):
        if a.mask[k] >= 0.5:
            pid = a.assigned_node(k)
            nodes.append(replace(n, label=pg.node(pid).ptype, assigned_program=pid))
        else:
            nodes.append(replace(n, label=None, assigned_program=None))
    return replace(vg, nodes=tuple(nodes))


def design_from_labeled_graph(vg: VoxelGraph, pg: ProgramGraph) -> VolumetricDesign:
    design = VolumetricDesign(voxels=vg, program=pg, assignment=assignment_from_labels(vg, pg))
    validate_design(design)
    return design
