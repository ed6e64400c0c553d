"""Synthetic design tasks with quadratic ground truth and a noisy evaluator.

Each application exposes m concave quadratic objectives over [0, 1]^n,

    f_j(x) = c_j - sum_i b_ji * (x_i - a_ji)^2,

clamped to [-1, 1]. The simulator adds per-objective uniform noise whose
half-width depends on the evaluation fidelity (rigorous "formal" vs quick
"informal" testing) and applies a configurable wall-clock delay.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import (
    AxisSpec,
    DimensionError,
    Fidelity,
    Observation,
    ObjectiveSpace,
    ParameterSpace,
)

FORMAL_NOISE_HALFWIDTH = 0.05
INFORMAL_NOISE_HALFWIDTH = 0.25
FORMAL_DELAY_S = 20.0
INFORMAL_DELAY_S = 3.0


@dataclass(frozen=True)
class QuadraticObjective:
    """Concave quadratic: optimum position a (may sit outside the unit cube),
    strictly positive scales b, optimal value c."""

    a: np.ndarray
    b: np.ndarray
    c: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise DimensionError(f"a/b shape mismatch: {self.a.shape} vs {self.b.shape}")
        if np.any(self.b <= 0):
            raise ValueError("scaling factors b must be strictly positive")

    def value(self, x: np.ndarray) -> np.ndarray:
        """Unclamped value; x may be (n,) or a batch (..., n)."""
        x = np.asarray(x, dtype=float)
        return self.c - np.sum(self.b * (x - self.a) ** 2, axis=-1)

    def box_maximum(self) -> tuple[np.ndarray, float]:
        """Argmax/max over [0,1]^n (separable, so clip the optimum)."""
        x_star = np.clip(self.a, 0.0, 1.0)
        return x_star, float(self.value(x_star))


@dataclass(frozen=True)
class SyntheticApp:
    id: str
    description: str
    parameter_space: ParameterSpace
    objective_space: ObjectiveSpace
    objectives: tuple[QuadraticObjective, ...]

    def __post_init__(self):
        for obj in self.objectives:
            if obj.a.shape[0] != self.parameter_space.dims:
                raise DimensionError(
                    f"app {self.id}: objective expects {obj.a.shape[0]} dims, "
                    f"space has {self.parameter_space.dims}"
                )
        if len(self.objectives) != self.objective_space.dims:
            raise DimensionError(f"app {self.id}: objective count mismatch")

    @property
    def n(self) -> int:
        return self.parameter_space.dims

    @property
    def m(self) -> int:
        return self.objective_space.dims


def evaluate_true(app: SyntheticApp, x) -> np.ndarray:
    """Noise-free objective vector at x, clamped to [-1, 1]. Deterministic."""
    x = app.parameter_space.check_point(x)
    raw = np.array([obj.value(x) for obj in app.objectives])
    return np.clip(raw, -1.0, 1.0)


def evaluate_true_batch(app: SyntheticApp, xs: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Vectorized ground truth for a (k, n) batch -> (k, m)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != app.n:
        raise DimensionError(f"expected (k, {app.n}) batch, got {xs.shape}")
    raw = np.stack([obj.value(xs) for obj in app.objectives], axis=1)
    return np.clip(raw, -1.0, 1.0) if clamp else raw


@dataclass
class EvaluationSimulator:
    """Simulated user testing: uniform noise + fidelity-dependent delay.

    A single counter-based RNG stream (Philox) is shared by all draws, so a
    given (seed, call sequence) reproduces identical observations. One
    simulator instance must not be used from multiple threads at once.
    """

    formal_noise_halfwidth: float = FORMAL_NOISE_HALFWIDTH
    informal_noise_halfwidth: float = INFORMAL_NOISE_HALFWIDTH
    formal_delay: float = FORMAL_DELAY_S
    informal_delay: float = INFORMAL_DELAY_S
    rng_seed: int | np.random.SeedSequence = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if min(self.formal_noise_halfwidth, self.informal_noise_halfwidth) < 0:
            raise ValueError("noise halfwidths must be >= 0")
        if min(self.formal_delay, self.informal_delay) < 0:
            raise ValueError("delays must be >= 0")
        self._rng = np.random.Generator(np.random.Philox(self.rng_seed))

    def noise_halfwidth(self, fidelity: Fidelity) -> float:
        return (
            self.formal_noise_halfwidth
            if fidelity is Fidelity.FORMAL
            else self.informal_noise_halfwidth
        )

    def delay(self, fidelity: Fidelity) -> float:
        return self.formal_delay if fidelity is Fidelity.FORMAL else self.informal_delay


def simulate_evaluation(
    sim: EvaluationSimulator,
    app: SyntheticApp,
    x,
    fidelity: Fidelity,
    iteration: int = 0,
    timestamp: float | None = None,
) -> Observation:
    """Evaluate x with fidelity-appropriate noise; blocks for the configured delay.

    The noisy values are clamped to [-1, 1]; pre-clamp values are kept on the
    observation for audit logs.
    """
    fidelity = Fidelity(fidelity)
    truth_raw = np.array([obj.value(app.parameter_space.check_point(x)) for obj in app.objectives])
    halfwidth = sim.noise_halfwidth(fidelity)
    noise = sim._rng.uniform(-halfwidth, halfwidth, size=app.m) if halfwidth > 0 else np.zeros(app.m)
    noisy_raw = truth_raw + noise
    delay = sim.delay(fidelity)
    if delay > 0:
        time.sleep(delay)
    return Observation(
        point=np.asarray(x, dtype=float).copy(),
        objectives=np.clip(noisy_raw, -1.0, 1.0),
        fidelity=fidelity,
        iteration=iteration,
        timestamp=time.time() if timestamp is None else timestamp,
        objectives_raw=noisy_raw,
    )


def _app(app_id, description, params, objectives, quads):
    return SyntheticApp(
        id=app_id,
        description=description,
        parameter_space=ParameterSpace(tuple(AxisSpec(*p) for p in params)),
        objective_space=ObjectiveSpace(tuple(AxisSpec(*o) for o in objectives)),
        objectives=tuple(QuadraticObjective(a, b, c) for a, b, c in quads),
    )


def builtin_apps() -> list[SyntheticApp]:
    """The three web-app tasks plus the 2-D tutorial task."""
    app1 = _app(
        "app1",
        "Content feed web app for a technology company; tune feed behavior to "
        "balance revenue against how users rate the experience.",
        [
            ("Density of ads", 0, 1),
            ("Notification frequency", 0, 2, "per hour"),
            ("Personalization rate of content", 0, 1),
            ("Moderation rate of content", 0, 1),
            ("Refresh time of content", 0, 20, "minutes"),
        ],
        [
            ("Daily revenue", 0, 20, "thousands USD"),
            ("User rating", 0, 5),
        ],
        [
            ([0.9, 0.3, 0.8, 0.25, 0.25], [0.9, 0.4, 1.3, 0.7, 0.4], 0.7),
            ([0.3, 0.35, 1.1, 0.75, 0.3], [1.0, 0.6, 1.2, 0.5, 0.4], 0.8),
        ],
    )
    app2 = _app(
        "app2",
        "Q&A forum web app; tune how questions are surfaced so that they get "
        "answered quickly and in volume.",
        [
            ("Question categories", 5, 50),
            ("Refresh time of content", 0, 1000),
            ("Length of question preview", 0, 500, "characters"),
            ("Max number of question tags", 1, 10),
            ("Threshold activity rating for user to answer questions", 0, 5),
        ],
        [
            ("Answering rate of questions", 0, 2, "per minute"),
            ("Questions answered", 0, 100),
        ],
        [
            ([-0.1, 0.25, 0.7, 0.7, 0.65], [1.2, 0.5, 0.4, 1.0, 0.6], 0.8),
            ([0.2, 0.75, 0.75, 0.1, 0.7], [1.3, 0.7, 0.4, 0.9, 0.4], 0.7),
        ],
    )
    app3 = _app(
        "app3",
        "Restaurant map web app; tune the map markers and labels so users find "
        "restaurants fast and do not miss any.",
        [
            ("Location icon transparency", 0.5, 1),
            ("Cursor distance for restaurant to show", 5, 50),
            ("Location icon size", 1, 10),
            ("Description box size", 10, 50),
            ("Restaurant name text size", 10, 30),
        ],
        [
            ("Average speed to find restaurants", 0, 2, "per minute"),
            ("Accuracy in finding all restaurants", 0, 100),
        ],
        [
            ([1.1, 0.75, 0.35, 0.3, 0.3], [1.2, 0.5, 0.6, 1.0, 0.4], 0.7),
            ([0.8, 0.25, 0.3, 0.9, 0.25], [1.3, 0.7, 0.4, 0.9, 0.4], 0.8),
        ],
    )
    tutorial = _app(
        "tutorial",
        "Touchscreen contact-registration tutorial task; tune the contact "
        "threshold so targets are hit fast and reliably.",
        [
            ("Force to register contact on screen", 10, 100, "N"),
            ("Area to register contact on screen", 0.5, 3.0, "cm^2"),
        ],
        [
            ("Average target hit speed", 0, 3, "per second"),
            ("Accuracy of hitting targets", 0, 100, "%"),
        ],
        [
            ([0.3, 0.35], [1.0, 0.8], 0.7),
            ([0.7, 0.65], [1.2, 0.9], 0.8),
        ],
    )
    return [app1, app2, app3, tutorial]


def app_by_id(app_id: str, extra_apps: list[SyntheticApp] | None = None) -> SyntheticApp:
    for app in (extra_apps or []) + builtin_apps():
        if app.id == app_id:
            return app
    raise KeyError(f"unknown app id: {app_id!r}")


def load_apps(path: str | Path) -> list[SyntheticApp]:
    """Load custom task definitions from a JSON file.

    Schema (see docs/custom-apps.md): top-level list of apps, each with
    ``id``, optional ``description``, ``parameters`` (name/min/max/unit) and
    ``objectives`` (name/min/max/unit plus the quadratic's a, b, c).
    """
    raw = json.loads(Path(path).read_text())
    if isinstance(raw, dict):
        raw = [raw]
    apps = []
    for entry in raw:
        params = [
            (p["name"], float(p["min"]), float(p["max"]), p.get("unit", ""))
            for p in entry["parameters"]
        ]
        objectives = [
            (o["name"], float(o["min"]), float(o["max"]), o.get("unit", ""))
            for o in entry["objectives"]
        ]
        quads = [(o["a"], o["b"], float(o["c"])) for o in entry["objectives"]]
        apps.append(_app(entry["id"], entry.get("description", entry["id"]), params, objectives, quads))
    return apps
