"""Hypervolume, MC expected-hypervolume-improvement, greedy q-batch proposals.

The improvement machinery works on 2-D maximization fronts. Per posterior
sample the dominated region of the current (latent, re-sampled) front is a
staircase; its complement splits into vertical strips, and a candidate's
improvement is its rectangle's overlap with those strips. Everything is
vectorized across MC samples and candidate points, which is what makes the
multi-start inner optimization affordable in numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy.special import ndtr
from threadpoolctl import threadpool_limits

try:
    import numba

    # skip the TBB probe (version warnings); workqueue is plenty for 2 threads
    numba.config.THREADING_LAYER = "workqueue"

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    _HAVE_NUMBA = False

from .domain import DimensionError, Fidelity, Observation
from .surrogate import (
    GaussianProcessModel,
    InsufficientDataError,
    PosteriorPrediction,
    _chol_with_jitter,
    matern52,
    posterior_joint,
    predict_batch,
    sample_posterior,
)
from scipy.linalg import cho_solve, solve_triangular


class ReferenceError_(ValueError):
    """A front point does not dominate the reference point."""


class UnsupportedDimensionError(ValueError):
    """Exact hypervolume only implemented for two objectives."""


class CandidateGenerationError(RuntimeError):
    """Inner acquisition optimization kept returning non-finite values."""


DEFAULT_REF_MARGIN = 0.1


def default_reference_point(m: int = 2, margin: float = DEFAULT_REF_MARGIN) -> np.ndarray:
    """Reference strictly below the attainable (clamped) range [-1, 1]^m."""
    return np.full(m, -1.0 - margin)


def hypervolume_2d(front, ref) -> float:
    """Exact dominated area between a 2-D front and a reference point.

    Dominated or duplicate points contribute nothing; every point must weakly
    dominate the reference.
    """
    ref = np.asarray(ref, dtype=float)
    if ref.shape != (2,):
        raise UnsupportedDimensionError(f"reference must have length 2, got {ref.shape}")
    pts = np.asarray(front, dtype=float)
    if pts.size == 0:
        return 0.0
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise UnsupportedDimensionError(f"hypervolume_2d needs (k, 2) points, got {pts.shape}")
    if np.any(pts < ref):
        bad = pts[np.any(pts < ref, axis=1)][0]
        raise ReferenceError_(f"point {bad} does not dominate reference {ref}")
    return _dominated_area(pts, ref)


def _dominated_area(pts: np.ndarray, ref: np.ndarray) -> float:
    """Sweep over points sorted by the first objective; lenient about points
    at or below the reference (they contribute zero)."""
    if pts.shape[0] == 0:
        return 0.0
    order = np.argsort(-pts[:, 0], kind="stable")
    best2 = ref[1]
    area = 0.0
    for y1, y2 in pts[order]:
        if y2 > best2:
            area += max(y1 - ref[0], 0.0) * (y2 - best2)
            best2 = y2
    return area


def hypervolume_mc(front, ref, n_draws: int = 100_000, rng=None) -> float:
    """Monte-Carlo dominated volume for m >= 3. Experimental: used only when
    no exact routine exists; accuracy is O(1/sqrt(n_draws))."""
    pts = np.asarray(front, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if pts.size == 0:
        return 0.0
    rng = rng or np.random.default_rng(0)
    upper = pts.max(axis=0)
    widths = np.maximum(upper - ref, 0.0)
    if np.any(widths == 0.0):
        return 0.0
    draws = ref + rng.uniform(size=(n_draws, ref.shape[0])) * widths
    dominated = np.zeros(n_draws, dtype=bool)
    for p in pts:
        dominated |= np.all(draws <= p, axis=1)
    return float(np.prod(widths) * np.mean(dominated))


# ---------------------------------------------------------------------------
# staircase decomposition of sampled fronts


def _staircase(samples: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strip decomposition of the region dominated by each sample's front.

    samples: (s, p, 2). Returns boundaries A (s, p+2, asc with ref/inf pads)
    and heights H (s, p+1): strip j spans (A[j], A[j+1]] at height H[j].
    """
    s, p, m = samples.shape
    if m != 2:
        raise UnsupportedDimensionError("staircase decomposition needs m = 2")
    if p == 0:
        a = np.full((s, 2), np.inf)
        a[:, 0] = ref[0]
        return a, np.full((s, 1), ref[1])
    v = np.maximum(samples, ref)  # clipping preserves area above ref
    y1, y2 = v[:, :, 0], v[:, :, 1]
    desc = np.argsort(-y1, axis=1, kind="stable")
    y1d = np.take_along_axis(y1, desc, axis=1)
    y2d = np.take_along_axis(y2, desc, axis=1)
    cm = np.maximum.accumulate(y2d, axis=1)
    prev = np.concatenate([np.full((s, 1), -np.inf), cm[:, :-1]], axis=1)
    on_front = y2d > prev
    # non-front entries become zero-width pads at the far end; trimming the
    # arrays to the deepest front keeps the downstream broadcast small
    width = int(on_front.sum(axis=1).max())
    pad1 = np.where(on_front, y1d, np.inf)
    pad2 = np.where(on_front, y2d, ref[1])
    asc = np.argsort(pad1, axis=1, kind="stable")
    a = np.take_along_axis(pad1, asc, axis=1)[:, :width]
    h = np.take_along_axis(pad2, asc, axis=1)[:, :width]
    bounds = np.concatenate([np.full((s, 1), ref[0]), a, np.full((s, 1), np.inf)], axis=1)
    heights = np.concatenate([h, np.full((s, 1), ref[1])], axis=1)
    return bounds, heights


def _hvi_vs_staircase(bounds: np.ndarray, heights: np.ndarray, cand: np.ndarray) -> np.ndarray:
    """Per-sample hypervolume improvement of candidate values.

    bounds (s, k+1), heights (s, k), cand (s, c, 2) -> (s, c).
    """
    c1 = cand[:, :, 0][:, :, None]  # (s, c, 1)
    c2 = cand[:, :, 1][:, :, None]
    width = np.minimum(c1, bounds[:, None, 1:]) - bounds[:, None, :-1]
    np.clip(width, 0.0, None, out=width)
    gain = c2 - heights[:, None, :]
    np.clip(gain, 0.0, None, out=gain)
    return np.einsum("scj,scj->sc", width, gain)


def nehvi_mc(
    models: list[GaussianProcessModel],
    candidate,
    baseline_points,
    pending,
    ref,
    n_mc: int,
    rng: np.random.Generator,
    return_se: bool = False,
):
    """MC noisy expected hypervolume improvement of one candidate.

    Baseline (and pending) objective values are treated as latent: they are
    re-sampled jointly with the candidate from the posterior on every draw.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    ref = np.asarray(ref, dtype=float)
    base = [np.asarray(p, dtype=float) for p in list(baseline_points) + list(pending)]
    pts = np.stack(base + [np.asarray(candidate, dtype=float)])
    samples = sample_posterior(models, pts, n_mc, rng)  # (n_mc, p+1, m)
    bounds, heights = _staircase(samples[:, :-1, :], ref)
    hvi = _hvi_vs_staircase(bounds, heights, samples[:, -1:, :])[:, 0]
    value = float(np.mean(hvi))
    if return_se:
        se = float(np.std(hvi, ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else float("inf")
        return value, se
    return value


# ---------------------------------------------------------------------------
# batch generation


@dataclass(frozen=True)
class Candidate:
    point: np.ndarray
    acquisition_value: float
    predictions: tuple[PosteriorPrediction, ...]

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        if self.acquisition_value < 0:
            raise ValueError("expected improvement cannot be negative")


@dataclass(frozen=True)
class CandidateBatch:
    candidates: tuple[Candidate, ...]
    generation_iteration: int = 0

    def __post_init__(self):
        if len(self.candidates) < 1:
            raise ValueError("a batch needs at least one candidate")
        pts = np.stack([c.point for c in self.candidates])
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.linalg.norm(pts[i] - pts[j]) <= 1e-6:
                    raise ValueError(f"candidates {i} and {j} coincide")

    @property
    def q(self) -> int:
        return len(self.candidates)

    def argmax_acquisition(self) -> int:
        values = [c.acquisition_value for c in self.candidates]
        return int(np.argmax(values))


@dataclass(frozen=True)
class AcquisitionOptions:
    n_mc: int = 128
    n_starts: int = 32
    evals_per_start: int = 200
    initial_step: float = 0.25
    min_step: float = 1e-3
    min_candidate_distance: float = 1e-6
    candidate_chunk: int = 512


def _partial_expectation(threshold: np.ndarray, mean: np.ndarray, sd: np.ndarray) -> np.ndarray:
    """E[max(0, c - threshold)] for c ~ N(mean, sd^2), broadcast over inputs.

    ``sd`` must be pre-clamped to a tiny positive value: the formula then
    reproduces the degenerate max(0, mean - threshold) limit exactly, and very
    large finite thresholds (sentinels for +inf) give 0 without special cases.
    """
    diff = mean - threshold
    z = diff / sd
    phi = np.square(z)
    phi *= -0.5
    np.exp(phi, out=phi)
    phi *= 0.3989422804014327  # 1/sqrt(2 pi)
    out = ndtr(z)
    out *= diff
    out += phi * sd
    return out


if _HAVE_NUMBA:

    @numba.njit(inline="always", fastmath=True)
    def _pexp_scalar(diff, sd):  # pragma: no cover - exercised via kernel
        z = diff / sd
        return diff * 0.5 * (1.0 + math.erf(z * 0.7071067811865475)) + (
            sd * 0.3989422804014327 * math.exp(-0.5 * z * z)
        )

    @numba.njit(cache=True, parallel=True, fastmath=True)
    def _ehvi_kernel(bounds, heights, mean1, sd1, mean2, sd2):
        """Fused strip sum: for each candidate, average over sample paths of
        sum_j (G1(A_j) - G1(A_j+1)) * G2(H_j). Strips right of the candidate
        underflow to zero, so the inner loop breaks early."""
        n_s, kp1 = bounds.shape
        k = kp1 - 1
        n_c = sd1.shape[0]
        out = np.empty(n_c, dtype=np.float64)
        for ci in numba.prange(n_c):
            s1 = float(sd1[ci])
            s2 = float(sd2[ci])
            acc = 0.0
            for si in range(n_s):
                m1 = float(mean1[si, ci])
                m2 = float(mean2[si, ci])
                g_prev = _pexp_scalar(m1 - float(bounds[si, 0]), s1)
                for j in range(k):
                    if g_prev <= 1e-13:
                        break
                    g_next = _pexp_scalar(m1 - float(bounds[si, j + 1]), s1)
                    w = g_prev - g_next
                    if w > 1e-13:
                        acc += w * _pexp_scalar(m2 - float(heights[si, j]), s2)
                    g_prev = g_next
            out[ci] = acc / n_s
        return out


class _SampledImprovement:
    """Rao-Blackwellized SAA of the noisy expected improvement.

    ``samples`` holds one set of joint posterior draws over the observed +
    pending points (the latent baseline). Given each sample path, a
    candidate's objective values are conditionally Gaussian and independent
    across objectives, so its expected improvement against the path's
    staircase has a closed form (products of 1-D partial expectations). Only
    the baseline paths are random; reusing them across greedy steps gives the
    sequence its diminishing-returns behavior.
    """

    def __init__(self, models, base_points: np.ndarray, samples: np.ndarray,
                 ref: np.ndarray, chunk: int = 512):
        self.models = models
        self.ref = ref
        self.n_mc = samples.shape[0]
        self.chunk = chunk
        self._chols = []
        self._weights = []  # (p, n_mc) per objective: C^-1 (s - mu)
        self._vbase = []  # (k_train, p) whitened cross-covariances
        for j, model in enumerate(models):
            mean, cov = posterior_joint(model, base_points)
            chol, _ = _chol_with_jitter(cov)
            self._chols.append(chol)
            self._weights.append(
                cho_solve((chol, True), (samples[:, :, j] - mean).T, check_finite=False)
            )
            hp = model.hyperparameters
            kxp = matern52(model.train_x, base_points, hp.lengthscales, hp.signal_variance)
            self._vbase.append(solve_triangular(model.chol_lower, kxp, lower=True))
        self.base_points = base_points
        self.bounds, self.heights = _staircase(samples, ref)
        # +inf pads become a large finite sentinel: the partial expectation
        # underflows to exactly 0 there, with no special-casing in the loop
        self._bounds32 = np.minimum(self.bounds, 1e8).astype(np.float32)
        self._heights32 = self.heights.astype(np.float32)

    def _conditional(self, xs: np.ndarray, j: int):
        """Candidate conditional N(mean, sd^2) given the paths: (n_mc, c), (c,)."""
        model = self.models[j]
        hp = model.hyperparameters
        k_train_c = matern52(model.train_x, xs, hp.lengthscales, hp.signal_variance)
        vc = solve_triangular(model.chol_lower, k_train_c, lower=True, check_finite=False)
        mu_c = hp.constant_mean + k_train_c.T @ model.alpha
        var_c = hp.signal_variance + hp.noise_variance - np.sum(vc**2, axis=0)
        kcp = matern52(xs, self.base_points, hp.lengthscales, hp.signal_variance)
        cross = kcp - vc.T @ self._vbase[j]  # (c, p) posterior cross-covariance
        cond_mean = (mu_c[:, None] + cross @ self._weights[j]).T  # (n_mc, c)
        t = solve_triangular(self._chols[j], cross.T, lower=True, check_finite=False)  # (p, c)
        cond_var = np.maximum(var_c - np.einsum("pc,pc->c", t, t), 0.0)
        return cond_mean, np.sqrt(cond_var)

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(xs)
        out = np.empty(xs.shape[0])
        for lo in range(0, xs.shape[0], self.chunk):
            out[lo:lo + self.chunk] = self._eval_chunk(xs[lo:lo + self.chunk])
        return out

    def _eval_chunk(self, xs: np.ndarray) -> np.ndarray:
        mean1, sd1 = self._conditional(xs, 0)
        mean2, sd2 = self._conditional(xs, 1)
        sd1 = np.maximum(sd1, 1e-12)
        sd2 = np.maximum(sd2, 1e-12)
        if _HAVE_NUMBA:
            return _ehvi_kernel(self._bounds32, self._heights32,
                                mean1.astype(np.float32), sd1,
                                mean2.astype(np.float32), sd2)
        # numpy fallback; single precision is plenty for the inner search.
        # E[overlap width of strip j] = G(A_j) - G(A_j+1) with G the partial
        # expectation of objective 1; heights use objective 2 independently
        f32 = np.float32
        g1 = _partial_expectation(
            self._bounds32[:, None, :], mean1.astype(f32)[:, :, None],
            sd1.astype(f32)[None, :, None],
        )
        widths = g1[:, :, :-1] - g1[:, :, 1:]
        gains = _partial_expectation(
            self._heights32[:, None, :], mean2.astype(f32)[:, :, None],
            sd2.astype(f32)[None, :, None],
        )
        acq = np.einsum("scj,scj->c", widths, gains, dtype=np.float64)
        return acq / self.n_mc

    def sample_values(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw the chosen point's values along each path: (n_mc, 1, m)."""
        vals = np.empty((self.n_mc, 1, len(self.models)))
        for j in range(len(self.models)):
            mean, sd = self._conditional(x[None], j)
            vals[:, 0, j] = mean[:, 0] + sd[0] * rng.standard_normal(self.n_mc)
        return vals


def _compass_search(evaluate, n: int, rng: np.random.Generator, options: AcquisitionOptions,
                    warm: np.ndarray | None = None):
    """Lockstep multi-start coordinate pattern search; returns per-start optima.

    ``warm`` points (previous greedy step's optima) replace up to half of the
    random starts, so successive steps do not under-optimize a surface that
    only shrinks. Converged starts drop out of the polling, so the per-start
    evaluation budget is an upper bound.
    """
    r = options.n_starts
    xs = rng.uniform(size=(r, n))
    if warm is not None and len(warm):
        k = min(len(warm), r // 2)
        xs[:k] = warm[:k]
    vals = evaluate(xs)
    step = np.full(r, options.initial_step)
    deltas = np.concatenate([np.eye(n), -np.eye(n)])  # (2n, n)
    rounds = max((options.evals_per_start - 1) // (2 * n), 1)
    for _ in range(rounds):
        active = np.flatnonzero(step >= options.min_step)
        if active.size == 0:
            break
        neigh = np.clip(
            xs[active, None, :] + step[active, None, None] * deltas[None, :, :], 0.0, 1.0
        )
        flat = evaluate(neigh.reshape(active.size * 2 * n, n)).reshape(active.size, 2 * n)
        best = np.argmax(flat, axis=1)
        best_vals = flat[np.arange(active.size), best]
        improved = best_vals > vals[active] + 1e-15
        xs[active] = np.where(improved[:, None], neigh[np.arange(active.size), best], xs[active])
        vals[active] = np.where(improved, best_vals, vals[active])
        step[active] = np.where(improved, step[active], step[active] * 0.5)
    return xs, vals


def _pick_distinct(xs, vals, chosen: list[np.ndarray], evaluate, rng, options) -> tuple[np.ndarray, float]:
    order = np.argsort(-vals, kind="stable")
    if not chosen:
        return xs[order[0]], float(vals[order[0]])
    prior = np.stack(chosen)
    for idx in order:
        if np.min(np.linalg.norm(prior - xs[idx], axis=1)) > options.min_candidate_distance:
            return xs[idx], float(vals[idx])
    # every optimum collapsed onto an earlier pick: nudge the best one away
    x = xs[order[0]]
    for scale in (1e-4, 1e-3, 1e-2, 1e-1):
        trial = np.clip(x + rng.uniform(-scale, scale, size=x.shape[0]), 0.0, 1.0)
        if np.min(np.linalg.norm(prior - trial, axis=1)) > options.min_candidate_distance:
            return trial, float(evaluate(trial[None])[0])
    raise CandidateGenerationError("could not find a distinct candidate point")


def generate_batch(
    models: list[GaussianProcessModel],
    formal_history: list[Observation],
    q: int,
    ref=None,
    rng: np.random.Generator | None = None,
    options: AcquisitionOptions | None = None,
    generation_iteration: int = 0,
) -> CandidateBatch:
    """Sequential-greedy batch: each point maximizes the MC improvement with
    the previously chosen points held pending (re-sampled as latent values)."""
    if q < 1:
        raise ValueError("q must be >= 1")
    options = options or AcquisitionOptions()
    rng = rng if rng is not None else np.random.default_rng(0)
    formal = [o for o in formal_history if o.fidelity is Fidelity.FORMAL]
    if len(formal) < 2:
        raise InsufficientDataError(f"need >= 2 formal observations, got {len(formal)}")
    ref = np.asarray(ref, dtype=float) if ref is not None else default_reference_point(len(models))
    x_observed = np.stack([o.point for o in formal])
    n = x_observed.shape[1]

    chosen: list[np.ndarray] = []
    acq_values: list[float] = []
    # the inner loop is dominated by many small matrix products; pooled BLAS
    # threads thrash on them, so pin to one thread for the duration
    with threadpool_limits(limits=1):
        base = x_observed
        samples = sample_posterior(models, base, options.n_mc, rng)
        warm = None
        for _ in range(q):
            x_new, val = None, np.nan
            for _attempt in range(2):
                evaluator = _SampledImprovement(
                    models, base, samples, ref, chunk=options.candidate_chunk
                )
                xs, vals = _compass_search(evaluator, n, rng, options, warm=warm)
                if np.any(np.isfinite(vals)):
                    x_new, val = _pick_distinct(xs, vals, chosen, evaluator, rng, options)
                    warm = xs[np.argsort(-vals, kind="stable")]
                    break
            if x_new is None or not np.isfinite(val):
                raise CandidateGenerationError("acquisition optimizer returned non-finite values")
            chosen.append(x_new)
            acq_values.append(max(val, 0.0))
            # extend the latent paths with the chosen point's sampled values
            new_vals = evaluator.sample_values(x_new, rng)  # (n_mc, 1, m)
            base = np.concatenate([base, x_new[None]])
            samples = np.concatenate([samples, new_vals], axis=1)

    candidates = []
    for x, val in zip(chosen, acq_values):
        preds = tuple(
            PosteriorPrediction(float(mu[0]), float(var[0]))
            for mu, var in (predict_batch(model, x[None]) for model in models)
        )
        candidates.append(Candidate(point=x, acquisition_value=val, predictions=preds))
    return CandidateBatch(candidates=tuple(candidates), generation_iteration=generation_iteration)
