"""Wavefront OBJ export: one cuboid per used voxel, grouped by program type."""

from __future__ import annotations

from .core import PROGRAM_TYPES, ProgramType, VolumetricDesign
from .metrics import _voxel_types

# Triangles over the 8 cuboid corners (corner index bit pattern: x + 2y + 4z),
# outward-facing winding.
_CUBE_FACES = (
    (0, 2, 1), (1, 2, 3),  # bottom (z-)
    (4, 5, 6), (5, 7, 6),  # top (z+)
    (0, 1, 4), (1, 5, 4),  # front (y-)
    (2, 6, 3), (3, 6, 7),  # back (y+)
    (0, 4, 2), (2, 4, 6),  # left (x-)
    (1, 3, 5), (3, 7, 5),  # right (x+)
)


def design_to_obj(design: VolumetricDesign) -> str:
    """Render used voxels as triangle meshes with one group per program type."""
    types = _voxel_types(design)
    by_type: dict[ProgramType, list[int]] = {}
    for k, t in enumerate(types):
        if t is not None:
            by_type.setdefault(t, []).append(k)

    lines = ["# volumetric design export (meters)"]
    if not by_type:
        lines.append("# empty design: no used voxels")
        return "\n".join(lines) + "\n"

    offset = 0
    for t in PROGRAM_TYPES:
        if t not in by_type:
            continue
        lines.append(f"g {t.value}")
        for k in sorted(by_type[t]):
            node = design.voxels.node(k)
            x0, y0, z0 = node.position
            x1 = x0 + node.dimension[0]
            y1 = y0 + node.dimension[1]
            z1 = z0 + node.dimension[2]
            for corner in range(8):
                x = x1 if corner & 1 else x0
                y = y1 if corner & 2 else y0
                z = z1 if corner & 4 else z0
                lines.append(f"v {x:.6f} {y:.6f} {z:.6f}")
            for fa, fb, fc in _CUBE_FACES:
                lines.append(f"f {offset + fa + 1} {offset + fb + 1} {offset + fc + 1}")
            offset += 8
    return "\n".join(lines) + "\n"


def write_obj(design: VolumetricDesign, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(design_to_obj(design))
