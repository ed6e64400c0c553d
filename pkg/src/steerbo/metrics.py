"""Pareto-set quality and exploration metrics for sessions.

The six per-session metrics: relative hypervolume, formal evaluation count,
Pareto set count, design space count, total travel distance, mean travel
distance. Headless runs normalize hypervolume against a dense-grid oracle
front (human studies would use the per-task maximum across runs instead).
"""

from __future__ import annotations

import itertools

import numpy as np

from .acquisition import default_reference_point, hypervolume_2d
from .domain import Fidelity, Observation, non_dominated_mask_2d, pareto_front
from .testbed import SyntheticApp, evaluate_true_batch


def relative_hypervolume(front, ref, reference_hv: float) -> float:
    if reference_hv <= 0:
        raise ValueError(f"reference_hv must be > 0, got {reference_hv}")
    return hypervolume_2d(front, ref) / reference_hv


def design_space_count(formal_points, parts: int = 3) -> int:
    """Occupied cells when [0,1]^n is cut into parts^n hypercubes.

    Coordinates exactly at 1.0 belong to the top cell, keeping the total cell
    count at parts^n.
    """
    if parts < 1:
        raise ValueError("parts must be >= 1")
    pts = np.asarray(formal_points, dtype=float)
    if pts.size == 0:
        return 0
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("points must lie in [0, 1]^n")
    cells = np.minimum((pts * parts).astype(int), parts - 1)
    return len({tuple(c) for c in cells})


def travel_distances(formal_points_in_order) -> tuple[float, float]:
    """(total, mean) Euclidean travel along consecutive formal evaluations.

    Mean divides by the number of evaluations (not hops), so a single point
    gives (0, 0).
    """
    pts = np.asarray(formal_points_in_order, dtype=float)
    if pts.size == 0:
        raise ValueError("need at least one point")
    if pts.shape[0] == 1:
        return 0.0, 0.0
    hops = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(np.sum(hops))
    return total, total / pts.shape[0]


def centroid_separation(group_a, group_b) -> float:
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    return float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))


def pareto_count(front) -> int:
    return len(front)


def formal_count(history: list[Observation]) -> int:
    return sum(1 for o in history if o.fidelity is Fidelity.FORMAL)


# ---------------------------------------------------------------------------
# oracle normalizer

_ORACLE_CACHE: dict[tuple, float] = {}


def oracle_front_hypervolume(
    app: SyntheticApp,
    ref=None,
    grid_points: int = 1_000_000,
) -> float:
    """Hypervolume of the noise-free Pareto front on a dense parameter grid.

    Uses a uniform grid with roughly ``grid_points`` nodes (per-dim count is
    the ceiling root), so the value is a slight underestimate of the true
    attainable hypervolume and is deterministic per app.
    """
    ref = np.asarray(ref, dtype=float) if ref is not None else default_reference_point(app.m)
    key = (app.id, tuple(ref), grid_points, app.n)
    if key in _ORACLE_CACHE:
        return _ORACLE_CACHE[key]
    per_dim = int(np.ceil(grid_points ** (1.0 / app.n)))
    axes = [np.linspace(0.0, 1.0, per_dim)] * app.n
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(app.n, -1).T
    values = evaluate_true_batch(app, grid)
    if app.m == 2:
        front = values[non_dominated_mask_2d(values)]
    else:
        front = values[pareto_front(values)]
    hv = hypervolume_2d(front, ref)
    _ORACLE_CACHE[key] = hv
    return hv


def session_metrics(
    history: list[Observation],
    app: SyntheticApp,
    ref=None,
    reference_hv: float | None = None,
) -> dict:
    """The six-metric row for one session, formal observations only."""
    ref = np.asarray(ref, dtype=float) if ref is not None else default_reference_point(app.m)
    formal = [o for o in history if o.fidelity is Fidelity.FORMAL]
    if reference_hv is None:
        reference_hv = oracle_front_hypervolume(app, ref)
    if formal:
        values = np.stack([o.objectives for o in formal])
        points = np.stack([o.point for o in formal])
        front = values[pareto_front(values)]
        rel_hv = relative_hypervolume(front, ref, reference_hv)
        n_pareto = len(front)
        total, mean = travel_distances(points)
        cells = design_space_count(points)
    else:
        rel_hv, n_pareto, total, mean, cells = 0.0, 0, 0.0, 0.0, 0
    return {
        "relative_hypervolume": rel_hv,
        "formal_count": len(formal),
        "pareto_count": n_pareto,
        "design_space_count": cells,
        "total_travel_distance": total,
        "mean_travel_distance": mean,
    }
