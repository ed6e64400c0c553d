"""Per-objective Gaussian-process regression.

Matern 5/2 kernel with ARD lengthscales, constant mean, Gaussian observation
noise. Hyperparameters are found by multi-restart L-BFGS on the log marginal
likelihood with weak log-normal regularizers (MAP); targets are standardized
internally and the fitted model is expressed back in the original target
scale. Predictive variance is the observation-level variance (latent + noise),
so far from data it reverts to signal_variance + noise_variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from threadpoolctl import threadpool_limits

from .domain import Fidelity, Observation

SQRT5 = np.sqrt(5.0)

JITTER_INITIAL = 1e-10
JITTER_MAX = 1e-4

NOISE_FLOOR = 1e-6

# log-normal regularizer centers/scales (standardized target units). The noise
# center keeps small-sample fits from interpolating observation noise, yet is
# weak enough that data which genuinely identifies near-zero noise (repeated
# inputs with consistent targets) still drives the fit to the floor.
_PRIOR = {
    "log_ls": (np.log(0.4), 1.5),
    "log_sig": (0.0, 1.5),
    "log_noise": (np.log(1e-3), 2.5),
    "mean": (0.0, 1.0),
}

_BOUNDS = {
    "log_ls": (np.log(1e-2), np.log(1e2)),
    "log_sig": (np.log(1e-4), np.log(1e3)),
    "log_noise": (np.log(NOISE_FLOOR), np.log(10.0)),
    "mean": (-10.0, 10.0),
}


class InsufficientDataError(ValueError):
    """Fewer than two formal observations available for fitting."""


class DataError(ValueError):
    """Non-finite or malformed training targets."""


class ConditioningError(np.linalg.LinAlgError):
    """Kernel matrix not positive definite even at the maximum jitter."""


@dataclass(frozen=True)
class KernelHyperparameters:
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float
    constant_mean: float

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", np.asarray(self.lengthscales, dtype=float))
        if np.any(self.lengthscales <= 0) or self.signal_variance <= 0 or self.noise_variance <= 0:
            raise ValueError("lengthscales and variances must be strictly positive")


@dataclass(frozen=True)
class PosteriorPrediction:
    mean: float
    variance: float


@dataclass(frozen=True)
class GaussianProcessModel:
    """Immutable fitted model; shareable across threads."""

    hyperparameters: KernelHyperparameters
    train_x: np.ndarray  # (k, n)
    train_y: np.ndarray  # (k,)
    chol_lower: np.ndarray  # cholesky of K_f + (noise + jitter) I
    alpha: np.ndarray  # solve(K, y - mean)
    jitter: float

    @property
    def prior_variance(self) -> float:
        hp = self.hyperparameters
        return hp.signal_variance + hp.noise_variance

    def fingerprint(self) -> str:
        """Digest of hyperparameters + training set; used by loop invariants."""
        import hashlib

        h = hashlib.sha256()
        hp = self.hyperparameters
        for arr in (hp.lengthscales, np.array([hp.signal_variance, hp.noise_variance, hp.constant_mean]),
                    self.train_x, self.train_y):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


def _scaled_sq_dists(x1: np.ndarray, x2: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """Per-dimension squared distances scaled by lengthscales: (k1, k2, n)."""
    d = x1[:, None, :] - x2[None, :, :]
    return (d / lengthscales) ** 2


def matern52(x1: np.ndarray, x2: np.ndarray, lengthscales, signal_variance: float) -> np.ndarray:
    d2 = np.sum(_scaled_sq_dists(x1, x2, np.asarray(lengthscales, dtype=float)), axis=-1)
    r = np.sqrt(np.maximum(d2, 0.0))
    return signal_variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * d2) * np.exp(-SQRT5 * r)


def _chol_with_jitter(a: np.ndarray, base_jitter: float = JITTER_INITIAL) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating jitter multiplicatively on failure."""
    eye = np.eye(a.shape[0])
    jitter = 0.0
    while True:
        try:
            return cholesky(a + jitter * eye, lower=True), jitter
        except np.linalg.LinAlgError:
            jitter = base_jitter if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise ConditioningError(
                    f"matrix of size {a.shape[0]} not positive definite at jitter {JITTER_MAX}"
                )


def log_marginal_likelihood(
    train_x: np.ndarray,
    train_y: np.ndarray,
    theta: np.ndarray,
    with_gradient: bool = True,
):
    """LML of the data under theta = [log lengthscales, log signal_variance,
    log noise_variance, constant_mean]; gradient is in those coordinates
    (log for the positives, natural for the mean)."""
    x = np.asarray(train_x, dtype=float)
    y = np.asarray(train_y, dtype=float)
    k, n = x.shape
    log_ls, log_sig, log_noise, mean = theta[:n], theta[n], theta[n + 1], theta[n + 2]
    ls = np.exp(log_ls)
    sig = np.exp(log_sig)
    noise = np.exp(log_noise)

    d2_dims = _scaled_sq_dists(x, x, ls)  # (k, k, n)
    d2 = np.sum(d2_dims, axis=-1)
    r = np.sqrt(np.maximum(d2, 0.0))
    decay = np.exp(-SQRT5 * r)
    kf = sig * (1.0 + SQRT5 * r + (5.0 / 3.0) * d2) * decay
    kmat = kf + noise * np.eye(k)

    chol, _ = _chol_with_jitter(kmat)
    resid = y - mean
    alpha = cho_solve((chol, True), resid)
    lml = (
        -0.5 * float(resid @ alpha)
        - float(np.sum(np.log(np.diag(chol))))
        - 0.5 * k * np.log(2.0 * np.pi)
    )
    if not with_gradient:
        return lml

    kinv = cho_solve((chol, True), np.eye(k))
    w = np.outer(alpha, alpha) - kinv  # dLML/dK = 0.5 * w

    # dK/dlog ls_i = (5/3) * sig * (1 + sqrt5 r) * decay * d2_dims[..., i]
    base = (5.0 / 3.0) * sig * (1.0 + SQRT5 * r) * decay
    grad = np.empty_like(theta)
    wb = w * base
    for i in range(n):
        grad[i] = 0.5 * float(np.sum(wb * d2_dims[:, :, i]))
    grad[n] = 0.5 * float(np.sum(w * kf))  # dK/dlog sig = kf
    grad[n + 1] = 0.5 * noise * float(np.trace(w))  # dK/dlog noise = noise I
    grad[n + 2] = float(np.sum(alpha))
    return lml, grad


def _penalty(theta: np.ndarray, n: int):
    """Weak MAP regularizer (negative log prior up to constants) + gradient."""
    val = 0.0
    grad = np.zeros_like(theta)
    specs = [("log_ls", slice(0, n)), ("log_sig", n), ("log_noise", n + 1), ("mean", n + 2)]
    for name, idx in specs:
        center, scale = _PRIOR[name]
        diff = theta[idx] - center
        val += float(np.sum(diff**2)) / (2.0 * scale**2)
        grad[idx] = diff / scale**2
    return val, grad


def fit_gp(
    train_x: np.ndarray,
    train_y: np.ndarray,
    restarts: int = 8,
    seed: int = 0,
) -> GaussianProcessModel:
    """MAP hyperparameters via multi-restart L-BFGS, then a fitted model.

    Targets are standardized for the optimization; the returned model's
    hyperparameters are in original target units.
    """
    x = np.asarray(train_x, dtype=float)
    y = np.asarray(train_y, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise DataError(f"bad training shapes: x {x.shape}, y {y.shape}")
    if x.shape[0] < 2:
        raise InsufficientDataError(f"need >= 2 observations, got {x.shape[0]}")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise DataError("non-finite training data")

    k, n = x.shape
    y_center = float(np.mean(y))
    y_scale = float(np.std(y))
    if y_scale < 1e-12:
        y_scale = 1.0
    z = (y - y_center) / y_scale

    bounds = (
        [_BOUNDS["log_ls"]] * n
        + [_BOUNDS["log_sig"], _BOUNDS["log_noise"], _BOUNDS["mean"]]
    )

    def neg_map(theta):
        try:
            lml, grad = log_marginal_likelihood(x, z, theta)
        except ConditioningError:
            return 1e12, np.zeros_like(theta)
        pen, pen_grad = _penalty(theta, n)
        return -(lml - pen), -(grad - pen_grad)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    starts = [np.concatenate([np.full(n, _PRIOR["log_ls"][0]), [0.0, _PRIOR["log_noise"][0], 0.0]])]
    for _ in range(max(restarts - 1, 0)):
        starts.append(
            np.concatenate(
                [
                    rng.uniform(np.log(0.1), np.log(2.0), size=n),
                    [rng.uniform(np.log(0.1), np.log(4.0))],
                    [rng.uniform(np.log(1e-5), np.log(0.2))],
                    [rng.normal(0.0, 0.3)],
                ]
            )
        )

    best_theta, best_val = None, np.inf
    with threadpool_limits(limits=1):  # small matrices; pooled threads thrash
        for theta0 in starts:
            res = minimize(neg_map, theta0, jac=True, method="L-BFGS-B", bounds=bounds)
            if np.isfinite(res.fun) and res.fun < best_val:
                best_val, best_theta = res.fun, res.x
    if best_theta is None:
        raise ConditioningError("all hyperparameter restarts failed to factorize")

    ls = np.exp(best_theta[:n])
    sig_std = float(np.exp(best_theta[n]))
    noise_std = float(np.exp(best_theta[n + 1]))
    mean_std = float(best_theta[n + 2])

    hp = KernelHyperparameters(
        lengthscales=ls,
        signal_variance=sig_std * y_scale**2,
        noise_variance=max(noise_std * y_scale**2, NOISE_FLOOR * y_scale**2),
        constant_mean=y_center + mean_std * y_scale,
    )
    return _build_model(x, y, hp)


def _build_model(x: np.ndarray, y: np.ndarray, hp: KernelHyperparameters) -> GaussianProcessModel:
    kf = matern52(x, x, hp.lengthscales, hp.signal_variance)
    chol, jitter = _chol_with_jitter(kf + hp.noise_variance * np.eye(x.shape[0]))
    alpha = cho_solve((chol, True), y - hp.constant_mean)
    return GaussianProcessModel(
        hyperparameters=hp,
        train_x=x.copy(),
        train_y=y.copy(),
        chol_lower=chol,
        alpha=alpha,
        jitter=jitter,
    )


def fit(
    formal_history: list[Observation],
    objective_index: int,
    restarts: int = 8,
    seed: int = 0,
) -> GaussianProcessModel:
    """Fit one objective's GP from a history; informal observations are ignored."""
    formal = [o for o in formal_history if o.fidelity is Fidelity.FORMAL]
    if len(formal) < 2:
        raise InsufficientDataError(f"need >= 2 formal observations, got {len(formal)}")
    x = np.stack([o.point for o in formal])
    y = np.array([float(o.objectives[objective_index]) for o in formal])
    return fit_gp(x, y, restarts=restarts, seed=seed)


def predict_batch(model: GaussianProcessModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior predictive mean/variance (observation level) at (p, n) points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hp = model.hyperparameters
    if pts.shape[1] != model.train_x.shape[1]:
        raise ValueError(f"point dim {pts.shape[1]} != model dim {model.train_x.shape[1]}")
    k_star = matern52(model.train_x, pts, hp.lengthscales, hp.signal_variance)  # (k, p)
    mean = hp.constant_mean + k_star.T @ model.alpha
    v = solve_triangular(model.chol_lower, k_star, lower=True)
    var = hp.signal_variance + hp.noise_variance - np.sum(v**2, axis=0)
    return mean, np.maximum(var, 0.0)


def predict(model: GaussianProcessModel, x) -> PosteriorPrediction:
    mean, var = predict_batch(model, np.asarray(x, dtype=float)[None, :])
    return PosteriorPrediction(mean=float(mean[0]), variance=float(var[0]))


def posterior_joint(model: GaussianProcessModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Joint predictive mean and covariance (incl. observation noise) at points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hp = model.hyperparameters
    k_star = matern52(model.train_x, pts, hp.lengthscales, hp.signal_variance)  # (k, p)
    mean = hp.constant_mean + k_star.T @ model.alpha
    v = solve_triangular(model.chol_lower, k_star, lower=True)
    prior = matern52(pts, pts, hp.lengthscales, hp.signal_variance)
    cov = prior - v.T @ v + hp.noise_variance * np.eye(pts.shape[0])
    return mean, cov


def sample_posterior(
    models: list[GaussianProcessModel],
    points: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Joint posterior-predictive samples, (n_samples, n_points, m).

    Objectives are sampled independently across models; each model's samples
    are drawn jointly over the given points.
    """
    pts = np.asarray(points, dtype=float)
    pts = pts.reshape(-1, models[0].train_x.shape[1]) if pts.size else pts.reshape(0, models[0].train_x.shape[1])
    m = len(models)
    out = np.empty((n_samples, pts.shape[0], m))
    if pts.shape[0] == 0:
        return out
    for j, model in enumerate(models):
        mean, cov = posterior_joint(model, pts)
        chol, _ = _chol_with_jitter(cov)
        zmat = rng.standard_normal((n_samples, pts.shape[0]))
        out[:, :, j] = mean[None, :] + zmat @ chol.T
    return out
