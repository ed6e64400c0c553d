import numpy as np
import pytest

from steerbo.domain import Fidelity, Observation
from steerbo.surrogate import (
    ConditioningError,
    DataError,
    InsufficientDataError,
    fit,
    fit_gp,
    log_marginal_likelihood,
    matern52,
    posterior_joint,
    predict,
    predict_batch,
    sample_posterior,
)

from conftest import make_history


def random_dataset(seed, k=6, n=3):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(k, n))
    y = np.sin(3 * x[:, 0]) + 0.5 * x[:, 1] - 0.2 * rng.standard_normal(k)
    theta = np.concatenate(
        [
            rng.uniform(np.log(0.2), np.log(1.0), size=n),
            [rng.uniform(np.log(0.3), np.log(2.0))],
            [rng.uniform(np.log(1e-3), np.log(1e-1))],
            [rng.normal(0, 0.5)],
        ]
    )
    return x, y, theta


class TestLogMarginalLikelihood:
    @pytest.mark.parametrize("seed", range(8))
    def test_gradient_matches_central_differences(self, seed):
        x, y, theta = random_dataset(seed)
        _, grad = log_marginal_likelihood(x, y, theta)
        h = 1e-5
        for i in range(len(theta)):
            e = np.zeros_like(theta)
            e[i] = h
            fd = (
                log_marginal_likelihood(x, y, theta + e, with_gradient=False)
                - log_marginal_likelihood(x, y, theta - e, with_gradient=False)
            ) / (2 * h)
            assert abs(grad[i] - fd) / (abs(fd) + 1e-8) < 1e-4

    def test_duplicate_training_point_stays_finite(self):
        x, y, theta = random_dataset(1)
        x2 = np.vstack([x, x[0]])
        y2 = np.append(y, y[0])
        lml, grad = log_marginal_likelihood(x2, y2, theta)
        assert np.isfinite(lml) and np.all(np.isfinite(grad))

    def test_single_point_closed_form(self):
        x = np.array([[0.4, 0.6]])
        y = np.array([0.3])
        mean, sig, noise = 0.1, 0.8, 0.01
        theta = np.array([np.log(0.5), np.log(0.5), np.log(sig), np.log(noise), mean])
        lml = log_marginal_likelihood(x, y, theta, with_gradient=False)
        var = sig + noise
        expected = -0.5 * (y[0] - mean) ** 2 / var - 0.5 * np.log(var) - 0.5 * np.log(2 * np.pi)
        assert lml == pytest.approx(expected, abs=1e-6)


class TestFit:
    def test_interpolates_noiseless_smooth_data(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(5, 2))
        y = np.sin(3 * x[:, 0]) + x[:, 1] ** 2
        model = fit_gp(x, y, seed=0)
        for xi, yi in zip(x, y):
            assert predict(model, xi).mean == pytest.approx(yi, abs=1e-4)

    def test_constant_targets(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(size=(6, 2))
        model = fit_gp(x, np.full(6, 0.3), seed=0)
        assert model.hyperparameters.constant_mean == pytest.approx(0.3, abs=1e-3)
        for probe in rng.uniform(size=(20, 2)):
            assert predict(model, probe).mean == pytest.approx(0.3, abs=1e-3)

    def test_lengthscale_recovery_within_factor_two(self):
        recovered = []
        for trial in range(20):
            rng = np.random.default_rng(100 + trial)
            x = rng.uniform(size=(25, 1))
            k = matern52(x, x, np.array([0.3]), 1.0) + 1e-8 * np.eye(25)
            y = np.linalg.cholesky(k) @ rng.standard_normal(25)
            model = fit_gp(x, y, seed=trial)
            recovered.append(model.hyperparameters.lengthscales[0])
        med = np.median(recovered)
        assert 0.15 <= med <= 0.6

    def test_requires_two_observations(self):
        with pytest.raises(InsufficientDataError):
            fit_gp(np.zeros((1, 2)), np.zeros(1))

    def test_rejects_non_finite_targets(self):
        with pytest.raises(DataError):
            fit_gp(np.zeros((3, 2)), np.array([0.0, np.nan, 1.0]))

    def test_uses_only_formal_observations(self, app1):
        formal = make_history(app1, 4, seed=3)
        informal = Observation(
            point=np.full(5, 0.5),
            objectives=np.array([5.0, 5.0]),  # absurd values; must be ignored
            fidelity=Fidelity.INFORMAL,
            iteration=99,
        )
        m_with = fit(formal + [informal], 0, seed=0)
        m_without = fit(formal, 0, seed=0)
        assert m_with.fingerprint() == m_without.fingerprint()


class TestPredict:
    def test_prior_reversion_far_away(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(size=(6, 2))
        y = np.sin(2 * x[:, 0]) + x[:, 1]
        model = fit_gp(x, y, seed=0)
        far = predict(model, np.array([80.0, -80.0]))
        hp = model.hyperparameters
        assert far.mean == pytest.approx(hp.constant_mean, rel=0.01)
        assert far.variance == pytest.approx(hp.signal_variance + hp.noise_variance, rel=0.01)

    def test_posterior_variance_bounded_by_prior(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(size=(10, 3))
        y = rng.standard_normal(10)
        model = fit_gp(x, y, seed=0)
        probes = rng.uniform(-0.5, 1.5, size=(1000, 3))
        _, var = predict_batch(model, probes)
        assert np.all(var >= 0.0)
        assert np.all(var <= model.prior_variance + 1e-9)

    def test_prediction_invariant_to_data_permutation(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(size=(8, 2))
        y = np.cos(4 * x[:, 0]) * x[:, 1]
        perm = rng.permutation(8)
        m1 = fit_gp(x, y, seed=0)
        m2 = fit_gp(x[perm], y[perm], seed=0)
        probes = rng.uniform(size=(50, 2))
        mu1, var1 = predict_batch(m1, probes)
        mu2, var2 = predict_batch(m2, probes)
        assert np.allclose(mu1, mu2, atol=1e-9)
        assert np.allclose(var1, var2, atol=1e-9)

    def test_dimension_mismatch(self):
        model = fit_gp(np.random.default_rng(5).uniform(size=(4, 2)), np.arange(4.0), seed=0)
        with pytest.raises(ValueError):
            predict(model, np.zeros(3))


class TestSamplePosterior:
    def make_models(self, seed=6):
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=(8, 2))
        return [
            fit_gp(x, np.sin(3 * x[:, 0]) + 0.1 * j, seed=j) for j in range(2)
        ], x

    def test_mc_moments_match_predict(self):
        models, _ = self.make_models()
        point = np.array([[0.42, 0.58]])
        n = 10_000
        samples = sample_posterior(models, point, n, np.random.default_rng(0))
        for j, model in enumerate(models):
            p = predict(model, point[0])
            se_mean = np.sqrt(p.variance / n)
            assert abs(samples[:, 0, j].mean() - p.mean) < 3 * se_mean
            se_var = p.variance * np.sqrt(2.0 / (n - 1))
            assert abs(samples[:, 0, j].var(ddof=1) - p.variance) < 3 * se_var

    def test_zero_points(self):
        models, _ = self.make_models()
        samples = sample_posterior(models, np.empty((0, 2)), 5, np.random.default_rng(0))
        assert samples.shape == (5, 0, 2)

    def test_fixed_seed_bitwise_identical(self):
        models, _ = self.make_models()
        pts = np.random.default_rng(1).uniform(size=(4, 2))
        s1 = sample_posterior(models, pts, 64, np.random.default_rng(42))
        s2 = sample_posterior(models, pts, 64, np.random.default_rng(42))
        assert np.array_equal(s1, s2)

    def test_joint_covariance_consistency(self):
        models, x = self.make_models()
        # far from data the latent dominates: nearby points correlate strongly
        far = np.array([5.0, 5.0])
        pts = np.stack([far, far + 1e-3])
        _, cov = posterior_joint(models[0], pts)
        corr = cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1])
        hp = models[0].hyperparameters
        expected = hp.signal_variance / (hp.signal_variance + hp.noise_variance)
        assert corr == pytest.approx(expected, rel=0.05)


class TestConditioning:
    def test_jitter_handles_exact_duplicates(self):
        x = np.vstack([np.full((6, 2), 0.5), np.full((6, 2), 0.5)])
        y = np.concatenate([np.zeros(6), np.zeros(6) + 1e-9])
        model = fit_gp(x, y, seed=0)
        assert np.isfinite(predict(model, np.array([0.5, 0.5])).mean)

    def test_conditioning_error_type(self):
        assert issubclass(ConditioningError, np.linalg.LinAlgError)
