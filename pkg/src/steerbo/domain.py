"""Core vocabulary: parameter/objective spaces, dominance, Pareto extraction.

Conventions used throughout the package:

* parameters live in the normalized unit cube [0, 1]^n,
* objective values live in [-1, 1]^m and are always maximized,
* display units are an affine image of the normalized scales.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    """Vector length does not match the space it is used with."""


class RangeError(ValueError):
    """Value outside the normalized or display bounds."""


class Fidelity(str, Enum):
    FORMAL = "formal"
    INFORMAL = "informal"


@dataclass(frozen=True)
class AxisSpec:
    """One parameter or objective axis in designer-facing units."""

    name: str
    display_min: float
    display_max: float
    unit: str = ""

    def __post_init__(self):
        if not self.display_min < self.display_max:
            raise ValueError(
                f"axis {self.name!r}: display_min must be < display_max "
                f"({self.display_min} >= {self.display_max})"
            )


def _check_vector(values, dims: int, lo: float, hi: float, what: str) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.shape[0] != dims:
        raise DimensionError(f"{what}: expected length {dims}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise RangeError(f"{what}: non-finite entries")
    if np.any(v < lo) or np.any(v > hi):
        raise RangeError(f"{what}: values outside [{lo}, {hi}]: {v}")
    return v


@dataclass(frozen=True)
class ParameterSpace:
    """n design parameters; normalized domain is exactly [0, 1]^n."""

    axes: tuple[AxisSpec, ...]

    def __post_init__(self):
        if len(self.axes) < 1:
            raise ValueError("a parameter space needs at least one axis")

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def check_point(self, x) -> np.ndarray:
        return _check_vector(x, self.dims, 0.0, 1.0, "design point")

    def to_display(self, x) -> np.ndarray:
        x = self.check_point(x)
        lo = np.array([a.display_min for a in self.axes])
        hi = np.array([a.display_max for a in self.axes])
        return lo + x * (hi - lo)

    def from_display(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.shape != (self.dims,):
            raise DimensionError(f"display vector: expected length {self.dims}, got shape {v.shape}")
        lo = np.array([a.display_min for a in self.axes])
        hi = np.array([a.display_max for a in self.axes])
        x = (v - lo) / (hi - lo)
        return _check_vector(x, self.dims, 0.0, 1.0, "design point (from display)")


@dataclass(frozen=True)
class ObjectiveSpace:
    """m objectives; normalized codomain is [-1, 1] per objective, maximized."""

    axes: tuple[AxisSpec, ...]

    def __post_init__(self):
        if len(self.axes) < 1:
            raise ValueError("an objective space needs at least one axis")

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def check_vector(self, y) -> np.ndarray:
        return _check_vector(y, self.dims, -1.0, 1.0, "objective vector")

    def display_slopes(self) -> np.ndarray:
        """d(display)/d(normalized); variances scale with the square of this."""
        return np.array([(a.display_max - a.display_min) / 2.0 for a in self.axes])

    def to_display(self, y) -> np.ndarray:
        y = self.check_vector(y)
        lo = np.array([a.display_min for a in self.axes])
        hi = np.array([a.display_max for a in self.axes])
        return lo + (y + 1.0) / 2.0 * (hi - lo)

    def from_display(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.shape != (self.dims,):
            raise DimensionError(f"display vector: expected length {self.dims}, got shape {v.shape}")
        lo = np.array([a.display_min for a in self.axes])
        hi = np.array([a.display_max for a in self.axes])
        y = 2.0 * (v - lo) / (hi - lo) - 1.0
        return _check_vector(y, self.dims, -1.0, 1.0, "objective vector (from display)")


@dataclass(frozen=True)
class Observation:
    """One evaluated design: normalized point, clamped objectives, fidelity tag.

    ``iteration`` is the 1-based observation ordinal within a session (both
    fidelities share the counter, so the sequence is strictly increasing).
    ``objectives_raw`` keeps the pre-clamp noisy values for auditing.
    """

    point: np.ndarray
    objectives: np.ndarray
    fidelity: Fidelity
    iteration: int
    timestamp: float = field(default_factory=time.time)
    objectives_raw: np.ndarray | None = None

    @property
    def is_formal(self) -> bool:
        return self.fidelity is Fidelity.FORMAL


def dominates(a, b) -> bool:
    """True iff a >= b componentwise and a > b somewhere (maximization)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"dominates: shapes {a.shape} vs {b.shape}")
    return bool(np.all(a >= b) and np.any(a > b))


def pareto_front(points: Sequence) -> list[int]:
    """Indices of non-dominated points; duplicates of a front point all kept.

    Pairwise O(k^2) check, vectorized. Fine up to a few thousand points; the
    metric oracle uses :func:`non_dominated_mask_2d` for large 2-D clouds.
    """
    if len(points) == 0:
        return []
    y = np.asarray(points, dtype=float)
    if y.ndim != 2:
        raise DimensionError(f"pareto_front: expected 2-D array, got shape {y.shape}")
    keep = ~_dominated_mask_pairwise(y)
    return [int(i) for i in np.flatnonzero(keep)]


def _dominated_mask_pairwise(y: np.ndarray) -> np.ndarray:
    k = y.shape[0]
    dominated = np.zeros(k, dtype=bool)
    # chunk rows so dense k x k temporaries stay bounded
    chunk = max(1, int(2e6) // max(k, 1))
    for start in range(0, k, chunk):
        block = y[start:start + chunk]  # (c, m)
        ge = np.all(y[None, :, :] >= block[:, None, :], axis=2)  # y_j >= block_i
        gt = np.any(y[None, :, :] > block[:, None, :], axis=2)
        dominated[start:start + chunk] = np.any(ge & gt, axis=1)
    return dominated


def non_dominated_mask_2d(y: np.ndarray) -> np.ndarray:
    """Boolean front mask for a large (k, 2) cloud via sort-and-sweep.

    Two passes: a weak cummax sweep keeps a small superset (ties included),
    then the exact pairwise check cleans it up. Duplicate front vectors are
    all retained, matching :func:`pareto_front`.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] != 2:
        raise DimensionError(f"non_dominated_mask_2d: expected (k, 2), got {y.shape}")
    k = y.shape[0]
    if k == 0:
        return np.zeros(0, dtype=bool)
    order = np.lexsort((-y[:, 1], -y[:, 0]))  # y1 desc, then y2 desc
    y2 = y[order, 1]
    best_before = np.concatenate(([-np.inf], np.maximum.accumulate(y2)[:-1]))
    survivors = order[y2 >= best_before]
    mask = np.zeros(k, dtype=bool)
    exact = ~_dominated_mask_pairwise(y[survivors])
    mask[survivors[exact]] = True
    return mask
