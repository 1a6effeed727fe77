"""JSON serialization for program graphs, voxel graphs, designs, and records.

Schemas (field names are part of the on-disk contract):

  program graph  {far, tpr: {type: ratio}, nodes: [{id, story, type, master}],
                  edges: [{a, b, kind}]}
  voxel graph    {site_area, nodes: [{id, pos: [x,y,z], dim: [w,d,h], story,
                  label?, program?}], edges: [{a, b}]}
  design         {program_graph, voxel_graph}
  record         design plus {far_actual, tpr_actual}

``serialize``/``deserialize`` round-trip to a canonical form: dense node ids
in order, edges min-id first sorted by (a, b), tpr keys in type order.
"""

from __future__ import annotations

import json
from typing import Any

from .core import (
    Assignment,
    EdgeKind,
    ProgramEdge,
    ProgramGraph,
    ProgramNode,
    ProgramType,
    ValidationError,
    VolumetricDesign,
    VoxelGraph,
    VoxelNode,
    assignment_from_labels,
    apply_assignment,
    validate_design,
    validate_program_graph,
    validate_voxel_graph,
)


class ParseError(ValueError):
    """Malformed JSON or schema violation; message carries the JSON path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


_TYPE_BY_NAME = {t.value: t for t in ProgramType}
_KIND_BY_NAME = {k.value: k for k in EdgeKind}


def _require(obj: Any, key: str, path: str) -> Any:
    if not isinstance(obj, dict):
        raise ParseError(path, f"expected object, got {type(obj).__name__}")
    if key not in obj:
        raise ParseError(path, f"missing key '{key}'")
    return obj[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(path, f"expected number, got {value!r}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(path, f"expected integer, got {value!r}")
    return value


def _ptype(name: Any, path: str) -> ProgramType:
    if name not in _TYPE_BY_NAME:
        raise ParseError(path, f"unknown program type {name!r}")
    return _TYPE_BY_NAME[name]


def _vec3(value: Any, path: str) -> tuple[float, float, float]:
    if not isinstance(value, list) or len(value) != 3:
        raise ParseError(path, f"expected [x, y, z], got {value!r}")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


# ---------------------------------------------------------------------------
# Program graph


def program_graph_to_obj(pg: ProgramGraph) -> dict:
    validate_program_graph(pg)
    tpr = {t.value: float(r) for t, r in sorted(pg.tpr.items(), key=lambda kv: kv[0].index)}
    nodes = [
        {"id": n.id, "story": n.story, "type": n.ptype.value, "master": n.is_master}
        for n in pg.nodes
    ]
    edges = [
        {"a": e.a, "b": e.b, "kind": e.kind.value}
        for e in sorted(pg.edges, key=lambda e: e.pair)
    ]
    return {"far": float(pg.far_limit), "tpr": tpr, "nodes": nodes, "edges": edges}


def program_graph_from_obj(obj: Any, path: str = "$") -> ProgramGraph:
    far = _number(_require(obj, "far", path), f"{path}.far")
    tpr_obj = _require(obj, "tpr", path)
    if not isinstance(tpr_obj, dict):
        raise ParseError(f"{path}.tpr", "expected object")
    tpr = {
        _ptype(name, f"{path}.tpr.{name}"): _number(r, f"{path}.tpr.{name}")
        for name, r in tpr_obj.items()
    }
    raw_nodes = _require(obj, "nodes", path)
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ParseError(f"{path}.nodes", "graph must be non-empty")
    nodes = []
    for i, rn in enumerate(raw_nodes):
        p = f"{path}.nodes[{i}]"
        nodes.append(
            ProgramNode(
                id=_integer(_require(rn, "id", p), f"{p}.id"),
                story=_integer(_require(rn, "story", p), f"{p}.story"),
                ptype=_ptype(_require(rn, "type", p), f"{p}.type"),
                is_master=bool(_require(rn, "master", p)),
            )
        )
    nodes.sort(key=lambda n: n.id)
    raw_edges = _require(obj, "edges", path)
    if not isinstance(raw_edges, list):
        raise ParseError(f"{path}.edges", "expected list")
    edges = []
    for i, re_ in enumerate(raw_edges):
        p = f"{path}.edges[{i}]"
        kind = _require(re_, "kind", p)
        if kind not in _KIND_BY_NAME:
            raise ParseError(f"{p}.kind", f"unknown edge kind {kind!r}")
        edges.append(
            ProgramEdge(
                a=_integer(_require(re_, "a", p), f"{p}.a"),
                b=_integer(_require(re_, "b", p), f"{p}.b"),
                kind=_KIND_BY_NAME[kind],
            )
        )
    pg = ProgramGraph(nodes=tuple(nodes), edges=tuple(edges), far_limit=far, tpr=tpr)
    try:
        validate_program_graph(pg)
    except ValidationError as err:
        raise ParseError(path, str(err)) from err
    return pg


# ---------------------------------------------------------------------------
# Voxel graph


def voxel_graph_to_obj(vg: VoxelGraph) -> dict:
    validate_voxel_graph(vg)
    nodes = []
    for n in vg.nodes:
        rn: dict[str, Any] = {
            "id": n.id,
            "pos": [float(v) for v in n.position],
            "dim": [float(v) for v in n.dimension],
            "story": n.story,
        }
        if n.label is not None:
            rn["label"] = n.label.value
        if n.assigned_program is not None:
            rn["program"] = n.assigned_program
        nodes.append(rn)
    edges = [{"a": a, "b": b} for a, b in sorted(vg.edges)]
    return {"site_area": float(vg.site_area), "nodes": nodes, "edges": edges}


def voxel_graph_from_obj(obj: Any, path: str = "$") -> VoxelGraph:
    site_area = _number(_require(obj, "site_area", path), f"{path}.site_area")
    raw_nodes = _require(obj, "nodes", path)
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ParseError(f"{path}.nodes", "graph must be non-empty")
    nodes = []
    for i, rn in enumerate(raw_nodes):
        p = f"{path}.nodes[{i}]"
        label = rn.get("label") if isinstance(rn, dict) else None
        program = rn.get("program") if isinstance(rn, dict) else None
        nodes.append(
            VoxelNode(
                id=_integer(_require(rn, "id", p), f"{p}.id"),
                position=_vec3(_require(rn, "pos", p), f"{p}.pos"),
                dimension=_vec3(_require(rn, "dim", p), f"{p}.dim"),
                story=_integer(_require(rn, "story", p), f"{p}.story"),
                label=None if label is None else _ptype(label, f"{p}.label"),
                assigned_program=None if program is None else _integer(program, f"{p}.program"),
            )
        )
    nodes.sort(key=lambda n: n.id)
    raw_edges = _require(obj, "edges", path)
    if not isinstance(raw_edges, list):
        raise ParseError(f"{path}.edges", "expected list")
    edges = []
    for i, re_ in enumerate(raw_edges):
        p = f"{path}.edges[{i}]"
        a = _integer(_require(re_, "a", p), f"{p}.a")
        b = _integer(_require(re_, "b", p), f"{p}.b")
        edges.append((min(a, b), max(a, b)))
    vg = VoxelGraph(nodes=tuple(nodes), edges=tuple(sorted(edges)), site_area=site_area)
    try:
        validate_voxel_graph(vg)
    except ValidationError as err:
        raise ParseError(path, str(err)) from err
    return vg


# ---------------------------------------------------------------------------
# Designs and records


def design_to_obj(design: VolumetricDesign) -> dict:
    if not design.assignment.hard:
        raise ValidationError("design serialization requires a hard assignment")
    validate_design(design)
    vg = apply_assignment(design.voxels, design.program, design.assignment)
    return {
        "program_graph": program_graph_to_obj(design.program),
        "voxel_graph": voxel_graph_to_obj(vg),
    }


def design_from_obj(obj: Any, path: str = "$") -> VolumetricDesign:
    pg = program_graph_from_obj(_require(obj, "program_graph", path), f"{path}.program_graph")
    vg = voxel_graph_from_obj(_require(obj, "voxel_graph", path), f"{path}.voxel_graph")
    try:
        assignment = assignment_from_labels(vg, pg)
        design = VolumetricDesign(voxels=vg, program=pg, assignment=assignment)
        validate_design(design)
    except ValidationError as err:
        raise ParseError(path, str(err)) from err
    return design


def record_to_obj(record) -> dict:
    """Serialize a synthetic record (duck-typed to avoid a synth import cycle)."""
    tpr = {
        t.value: float(r)
        for t, r in sorted(record.tpr_actual.items(), key=lambda kv: kv[0].index)
    }
    return {
        "far_actual": float(record.far_actual),
        "tpr_actual": tpr,
        "program_graph": program_graph_to_obj(record.program_graph),
        "voxel_graph": voxel_graph_to_obj(record.voxel_graph),
    }


def record_from_obj(obj: Any, path: str = "$"):
    from .synth import SynthRecord

    far_actual = _number(_require(obj, "far_actual", path), f"{path}.far_actual")
    tpr_obj = _require(obj, "tpr_actual", path)
    tpr_actual = {
        _ptype(name, f"{path}.tpr_actual.{name}"): _number(r, f"{path}.tpr_actual.{name}")
        for name, r in tpr_obj.items()
    }
    pg = program_graph_from_obj(_require(obj, "program_graph", path), f"{path}.program_graph")
    vg = voxel_graph_from_obj(_require(obj, "voxel_graph", path), f"{path}.voxel_graph")
    return SynthRecord(program_graph=pg, voxel_graph=vg, far_actual=far_actual, tpr_actual=tpr_actual)


# ---------------------------------------------------------------------------
# Top-level text API


def _to_obj(value) -> dict:
    from .synth import SynthRecord

    if isinstance(value, ProgramGraph):
        return program_graph_to_obj(value)
    if isinstance(value, VoxelGraph):
        return voxel_graph_to_obj(value)
    if isinstance(value, VolumetricDesign):
        return design_to_obj(value)
    if isinstance(value, SynthRecord):
        return record_to_obj(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def serialize(value) -> str:
    """Render a graph, design, or record as canonical JSON text."""
    return json.dumps(_to_obj(value), indent=2) + "\n"


def deserialize(text: str):
    """Parse JSON text into the graph, design, or record it encodes."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError("$", f"invalid JSON: {err}") from err
    if not isinstance(obj, dict):
        raise ParseError("$", "expected a JSON object at top level")
    if "far_actual" in obj:
        return record_from_obj(obj)
    if "program_graph" in obj:
        return design_from_obj(obj)
    if "far" in obj:
        return program_graph_from_obj(obj)
    if "site_area" in obj:
        return voxel_graph_from_obj(obj)
    raise ParseError("$", "unrecognized document: expected graph, design, or record keys")


def save(value, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(value))


def load(path):
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize(fh.read())
