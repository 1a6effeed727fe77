"""Evaluation metrics: connectivity accuracy, FAR distance, TPR accuracy,
and Fréchet distance between embedded sample sets.

Connectivity accuracy counts the non-master program edges realized by the
assignment: an edge is realized when some voxel of one room is face-adjacent
to some voxel of the other.  Extra adjacencies without a program edge never
penalize.  FAR distance is the relative error of the achieved floor area
ratio; TPR accuracy is 1 minus the total variation between achieved and
target program ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    PROGRAM_TYPES,
    ProgramType,
    EdgeKind,
    ValidationError,
    VolumetricDesign,
)
from .synth import conditions_from_types

PSD_EIG_FLOOR = -1e-8


def _voxel_types(design: VolumetricDesign) -> list[ProgramType | None]:
    """Per-voxel assigned type under a hard assignment (None when unused)."""
    a = design.assignment
    if not a.hard:
        raise ValidationError("metric requires a hard assignment; sample hard first")
    types: list[ProgramType | None] = []
    for k in range(design.voxels.num_nodes):
        if a.mask[k] >= 0.5:
            types.append(design.program.node(a.assigned_node(k)).ptype)
        else:
            types.append(None)
    return types


def _rooms(design: VolumetricDesign) -> dict[int, set[int]]:
    """Program node id -> set of voxel ids assigned to it (used voxels only)."""
    a = design.assignment
    rooms: dict[int, set[int]] = {}
    for k in range(design.voxels.num_nodes):
        if a.mask[k] >= 0.5:
            rooms.setdefault(a.assigned_node(k), set()).add(k)
    return rooms


def connectivity_accuracy(design: VolumetricDesign) -> float:
    """Fraction of non-master program edges realized as adjacent voxel rooms."""
    a = design.assignment
    if not a.hard:
        raise ValidationError("connectivity accuracy requires a hard assignment")
    rooms = _rooms(design)
    voxel_of: dict[int, int] = {}
    for pid, vids in rooms.items():
        for vid in vids:
            voxel_of[vid] = pid
    realized: set[tuple[int, int]] = set()
    for va, vb in design.voxels.edges:
        pa, pb = voxel_of.get(va), voxel_of.get(vb)
        if pa is not None and pb is not None and pa != pb:
            realized.add((min(pa, pb), max(pa, pb)))
    program_edges = [e for e in design.program.edges if e.kind is not EdgeKind.MASTER]
    if not program_edges:
        return 1.0
    hit = sum(1 for e in program_edges if e.pair in realized)
    return hit / len(program_edges)


def far_distance(design: VolumetricDesign, far_limit: float) -> float:
    """|achieved FAR - target| / target; an empty design scores distance 1."""
    if far_limit <= 0:
        raise ValidationError(f"far_limit must be positive, got {far_limit}")
    types = _voxel_types(design)
    if all(t is None for t in types):
        far_actual = 0.0
    else:
        far_actual, _ = conditions_from_types(design.voxels, types)
    return abs(far_actual - far_limit) / far_limit


def tpr_accuracy(design: VolumetricDesign, tpr_target: dict[ProgramType, float]) -> float:
    """1 minus the summed absolute error of area ratios per program type."""
    total = sum(tpr_target.values())
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"target ratios sum to {total}, expected 1")
    types = _voxel_types(design)
    if all(t is None for t in types):
        actual: dict[ProgramType, float] = {}
    else:
        _, actual = conditions_from_types(design.voxels, types)
    return 1.0 - sum(
        abs(actual.get(t, 0.0) - tpr_target.get(t, 0.0)) for t in PROGRAM_TYPES
    )


# ---------------------------------------------------------------------------
# Frechet distance


def _check_psd(sigma: np.ndarray, name: str) -> None:
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValidationError(f"{name} must be square, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, atol=1e-8):
        raise ValidationError(f"{name} is not symmetric")
    eigs = np.linalg.eigvalsh(sigma)
    if eigs.min() < PSD_EIG_FLOOR:
        raise ValidationError(f"{name} has negative eigenvalue {eigs.min():.3e}")


def frechet_distance(
    mu1: np.ndarray, sigma1: np.ndarray, mu2: np.ndarray, sigma2: np.ndarray
) -> float:
    """Frechet distance between two Gaussians.

    ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}), with the matrix square
    root taken by Schur decomposition and eigenvalues clamped at the
    -1e-8 floor.
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    sigma1 = np.atleast_2d(np.asarray(sigma1, dtype=float))
    sigma2 = np.atleast_2d(np.asarray(sigma2, dtype=float))
    if mu1.shape != mu2.shape or sigma1.shape != sigma2.shape:
        raise ValidationError("moment shapes do not match")
    _check_psd(sigma1, "sigma1")
    _check_psd(sigma2, "sigma2")

    diff = mu1 - mu2
    covmean, _ = scipy.linalg.sqrtm(sigma1 @ sigma2, disp=False)
    if not np.isfinite(covmean).all():
        # Degenerate product: nudge both covariances off the PSD boundary.
        offset = np.eye(sigma1.shape[0]) * 1e-10
        covmean, _ = scipy.linalg.sqrtm((sigma1 + offset) @ (sigma2 + offset), disp=False)
    if np.iscomplexobj(covmean):
        if np.abs(covmean.imag).max() > 1e-6 * max(1.0, np.abs(covmean.real).max()):
            raise ValidationError("matrix square root has a large imaginary part")
        covmean = covmean.real
    fd = float(diff @ diff + np.trace(sigma1) + np.trace(sigma2) - 2.0 * np.trace(covmean))
    return max(fd, 0.0)


def fit_gaussian(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of a feature matrix (rows are samples)."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValidationError("need a (samples, dim) matrix with at least 2 samples")
    mu = features.mean(axis=0)
    sigma = np.cov(features, rowvar=False)
    return mu, np.atleast_2d(sigma)


def frechet_score(features_a: np.ndarray, features_b: np.ndarray) -> float:
    mu1, s1 = fit_gaussian(features_a)
    mu2, s2 = fit_gaussian(features_b)
    return frechet_distance(mu1, s1, mu2, s2)


# ---------------------------------------------------------------------------
# Reporting


@dataclass(frozen=True)
class MetricsReport:
    con: float
    far_dist: float
    tpr_acc: float
    sample_count: int
    frechet: float | None = None

    def to_dict(self) -> dict:
        d = {
            "con": self.con,
            "far_dist": self.far_dist,
            "tpr_acc": self.tpr_acc,
            "sample_count": self.sample_count,
        }
        if self.frechet is not None:
            d["frechet"] = self.frechet
        return d


def evaluate_designs(
    designs: list[VolumetricDesign],
    *,
    reference_features: np.ndarray | None = None,
    design_features: np.ndarray | None = None,
) -> MetricsReport:
    """Mean metrics over designs, judged against each design's own conditions."""
    if not designs:
        raise ValidationError("no designs to evaluate")
    cons, fars, tprs = [], [], []
    for d in designs:
        cons.append(connectivity_accuracy(d))
        fars.append(far_distance(d, d.program.far_limit))
        tprs.append(tpr_accuracy(d, d.program.tpr))
    frechet = None
    if reference_features is not None and design_features is not None:
        frechet = frechet_score(design_features, reference_features)
    return MetricsReport(
        con=float(np.mean(cons)),
        far_dist=float(np.mean(fars)),
        tpr_acc=float(np.mean(tprs)),
        sample_count=len(designs),
        frechet=frechet,
    )
