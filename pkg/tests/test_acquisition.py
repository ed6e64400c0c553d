import itertools

import numpy as np
import pytest

from steerbo.acquisition import (
    AcquisitionOptions,
    Candidate,
    CandidateBatch,
    CandidateGenerationError,
    ReferenceError_,
    UnsupportedDimensionError,
    _dominated_area,
    _hvi_vs_staircase,
    _staircase,
    default_reference_point,
    generate_batch,
    hypervolume_2d,
    nehvi_mc,
)
from steerbo.surrogate import (
    InsufficientDataError,
    KernelHyperparameters,
    PosteriorPrediction,
    _build_model,
    fit,
    posterior_joint,
    predict,
)

from conftest import make_history


def grid_count_hv(points, ref, upper=(1.0, 1.0), cells_per_dim=1000, seed=0):
    """Count dominated cells on a cells_per_dim^2 grid, one stratified sample
    per cell (jittered grid), which makes the count unbiased with error far
    below the 2/sqrt(cells) scale."""
    points = np.asarray(points, dtype=float)
    rng = np.random.default_rng(seed)
    w = (upper[0] - ref[0]) / cells_per_dim
    h = (upper[1] - ref[1]) / cells_per_dim
    shape = (cells_per_dim, cells_per_dim)
    xs = ref[0] + (np.arange(cells_per_dim)[:, None] + rng.uniform(size=shape)) * w
    ys = ref[1] + (np.arange(cells_per_dim)[None, :] + rng.uniform(size=shape)) * h
    dominated = np.zeros(shape, dtype=bool)
    for p in points:
        dominated |= (xs <= p[0]) & (ys <= p[1])
    return int(dominated.sum()) * w * h


def inclusion_exclusion_hv(points, ref):
    """Exact union area of <= a few rectangles via inclusion-exclusion."""
    points = [np.asarray(p, dtype=float) for p in points]
    ref = np.asarray(ref, dtype=float)
    total = 0.0
    for r in range(1, len(points) + 1):
        for combo in itertools.combinations(points, r):
            corner = np.min(np.stack(combo), axis=0)
            area = np.prod(np.maximum(corner - ref, 0.0))
            total += (-1) ** (r + 1) * area
    return total


class TestHypervolume2D:
    def test_single_rectangle(self):
        assert hypervolume_2d([[0.5, 0.5]], [0, 0]) == pytest.approx(0.25, abs=1e-15)

    def test_two_point_front(self):
        # inclusion-exclusion: 0.2 + 0.2*0.8 = 0.36
        hv = hypervolume_2d([[1, 0.2], [0.2, 1]], [0, 0])
        assert hv == pytest.approx(0.36, abs=1e-12)
        assert hv == pytest.approx(grid_count_hv([[1, 0.2], [0.2, 1]], (0, 0)), abs=2e-3)

    def test_dominated_point_contributes_nothing(self):
        base = hypervolume_2d([[1, 0.2], [0.2, 1]], [0, 0])
        with_dominated = hypervolume_2d([[1, 0.2], [0.2, 1], [0.1, 0.1]], [0, 0])
        assert with_dominated == pytest.approx(base, abs=1e-15)

    def test_duplicates_contribute_nothing(self):
        assert hypervolume_2d([[0.5, 0.5], [0.5, 0.5]], [0, 0]) == pytest.approx(0.25)

    def test_empty_front(self):
        assert hypervolume_2d([], [0, 0]) == 0.0

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_inclusion_exclusion_small_fronts(self, seed):
        rng = np.random.default_rng(seed)
        ref = np.array([-1.1, -1.1])
        pts = rng.uniform(-1, 1, size=(rng.integers(1, 4), 2))
        assert hypervolume_2d(pts, ref) == pytest.approx(
            inclusion_exclusion_hv(pts, ref), abs=1e-12
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_grid_counting(self, seed):
        rng = np.random.default_rng(100 + seed)
        ref = np.array([-1.1, -1.1])
        pts = rng.uniform(-1, 1, size=(rng.integers(1, 21), 2))
        assert hypervolume_2d(pts, ref) == pytest.approx(
            grid_count_hv(pts, ref), abs=2e-3
        )

    def test_monotone_under_added_points(self):
        rng = np.random.default_rng(7)
        ref = np.array([-1.1, -1.1])
        pts = rng.uniform(-1, 1, size=(10, 2))
        hv = hypervolume_2d(pts, ref)
        for extra in rng.uniform(-1, 1, size=(20, 2)):
            assert hypervolume_2d(np.vstack([pts, extra]), ref) >= hv - 1e-12

    def test_reference_translation_algebra(self):
        p = np.array([0.6, 0.4])
        ref = np.array([-1.1, -1.1])
        delta = 0.07
        hv0 = hypervolume_2d([p], ref)
        hv1 = hypervolume_2d([p], ref + delta)
        expected_change = (p[0] - ref[0]) * (p[1] - ref[1]) - (p[0] - ref[0] - delta) * (
            p[1] - ref[1] - delta
        )
        assert hv0 - hv1 == pytest.approx(expected_change, abs=1e-12)

    def test_point_below_reference_rejected(self):
        with pytest.raises(ReferenceError_):
            hypervolume_2d([[-1.2, 0.0]], [-1.1, -1.1])

    def test_wrong_dimension_rejected(self):
        with pytest.raises(UnsupportedDimensionError):
            hypervolume_2d([[0.1, 0.2, 0.3]], [0, 0, 0])


class TestStaircase:
    def test_single_point_strips(self):
        bounds, heights = _staircase(np.array([[[0.3, 0.9]]]), np.array([0.0, 0.0]))
        assert bounds[0].tolist() == [0.0, 0.3, np.inf]
        assert heights[0].tolist() == [0.9, 0.0]

    def test_hvi_matches_area_difference(self):
        rng = np.random.default_rng(3)
        ref = np.array([-1.1, -1.1])
        for _ in range(100):
            base = rng.uniform(-1.3, 1, size=(rng.integers(0, 8), 2))
            cand = rng.uniform(-1.3, 1, size=2)
            bounds, heights = _staircase(base[None], ref)
            fast = _hvi_vs_staircase(bounds, heights, cand[None, None])[0, 0]
            slow = _dominated_area(np.vstack([base, cand[None]]), ref) - _dominated_area(base, ref)
            assert fast == pytest.approx(slow, abs=1e-12)


def interpolating_models(train_x, targets_by_objective, lengthscales, noise=1e-12):
    """Models with hand-set hyperparameters that interpolate the targets."""
    models = []
    for targets in targets_by_objective:
        hp = KernelHyperparameters(
            lengthscales=np.asarray(lengthscales, dtype=float),
            signal_variance=0.5,
            noise_variance=noise,
            constant_mean=0.0,
        )
        models.append(_build_model(np.asarray(train_x, dtype=float), np.asarray(targets, dtype=float), hp))
    return models


def quadrature_nehvi_single(mu_c, var_c, mu_b, var_b, ref, nodes=401):
    """Tensor-grid oracle: E[HVI] for independent Gaussian candidate vs a
    1-point baseline, via per-dimension partial expectations."""

    def e_relu(mu, var):  # E[(c - ref)_+] by 1-D quadrature
        sd = np.sqrt(var)
        grid = np.linspace(mu - 8 * sd, mu + 8 * sd, nodes)
        w = np.exp(-0.5 * ((grid - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
        return np.trapezoid(np.maximum(grid - 0, 0) * w, grid)

    def e_min_relu(mu1, var1, mu2, var2):  # E[(min(c,b) - ref)_+] on a 2-D grid
        sd1, sd2 = np.sqrt(var1), np.sqrt(var2)
        g1 = np.linspace(mu1 - 8 * sd1, mu1 + 8 * sd1, nodes)
        g2 = np.linspace(mu2 - 8 * sd2, mu2 + 8 * sd2, nodes)
        w1 = np.exp(-0.5 * ((g1 - mu1) / sd1) ** 2) / (sd1 * np.sqrt(2 * np.pi))
        w2 = np.exp(-0.5 * ((g2 - mu2) / sd2) ** 2) / (sd2 * np.sqrt(2 * np.pi))
        vals = np.maximum(np.minimum(g1[:, None], g2[None, :]), 0.0)
        inner = np.trapezoid(vals * w2[None, :], g2, axis=1)
        return np.trapezoid(inner * w1, g1)

    # shift so ref is the origin per dimension
    mu_c = np.asarray(mu_c) - np.asarray(ref)
    mu_b = np.asarray(mu_b) - np.asarray(ref)
    area_c = np.prod([e_relu(mu_c[d], var_c[d]) for d in range(2)])
    overlap = np.prod(
        [e_min_relu(mu_c[d], var_c[d], mu_b[d], var_b[d]) for d in range(2)]
    )
    return area_c - overlap


class TestNehviMC:
    def test_dominated_candidate_near_zero(self):
        train = np.array([[0.1, 0.1], [0.9, 0.9], [0.5, 0.5], [0.2, 0.8], [0.8, 0.2]])
        models = interpolating_models(
            train, [[0.8, 0.7, 0.9, 0.6, 0.85], [0.8, 0.7, 0.9, 0.85, 0.6]],
            lengthscales=[1.0, 1.0], noise=1e-10,
        )
        # candidate coincides with a training point whose values are deep
        # inside the dominated region of the others
        value = nehvi_mc(
            models, np.array([0.1, 0.1]), list(train), [],
            np.array([-1.1, -1.1]), 512, np.random.default_rng(0),
        )
        assert value < 1e-3

    def test_deterministic_limit_matches_exact_hvi(self):
        base_x = np.array([[0.2, 0.2], [0.8, 0.8]])
        cand_x = np.array([0.5, 0.5])
        train = np.vstack([base_x, cand_x[None]])
        y1 = np.array([0.6, -0.2, 0.4])
        y2 = np.array([-0.1, 0.5, 0.45])
        models = interpolating_models(train, [y1, y2], lengthscales=[0.4, 0.4])
        ref = np.array([-1.1, -1.1])
        value = nehvi_mc(models, cand_x, list(base_x), [], ref, 256, np.random.default_rng(1))
        base_front = np.array([[0.6, -0.1], [-0.2, 0.5]])
        exact = hypervolume_2d(np.vstack([base_front, [[0.4, 0.45]]]), ref) - hypervolume_2d(
            base_front, ref
        )
        assert value == pytest.approx(exact, abs=1e-6)

    def test_matches_quadrature_oracle(self):
        # short lengthscales make the three points effectively independent
        train = np.array([[0.05, 0.05], [0.5, 0.5], [0.95, 0.95]])
        models = interpolating_models(
            train, [[0.1, 0.3, 0.2], [0.2, 0.1, 0.3]], lengthscales=[0.03, 0.03], noise=1e-4
        )
        baseline = np.array([[0.5, 0.5]])
        cand = np.array([0.25, 0.75])
        ref = np.array([-1.1, -1.1])
        _, cov = posterior_joint(models[0], np.vstack([baseline, cand[None]]))
        assert abs(cov[0, 1]) < 1e-8  # independence assumption of the oracle
        preds_c = [predict(m, cand) for m in models]
        preds_b = [predict(m, baseline[0]) for m in models]
        oracle = quadrature_nehvi_single(
            [p.mean for p in preds_c], [p.variance for p in preds_c],
            [p.mean for p in preds_b], [p.variance for p in preds_b], ref,
        )
        est, se = nehvi_mc(
            models, cand, list(baseline), [], ref, 4096,
            np.random.default_rng(7), return_se=True,
        )
        assert abs(est - oracle) < 3 * se + 1e-5

    def test_nonnegative_and_reproducible(self):
        train = np.random.default_rng(5).uniform(size=(4, 2))
        models = interpolating_models(
            train, [train[:, 0] - 0.5, train[:, 1] - 0.5], lengthscales=[0.5, 0.5], noise=1e-4
        )
        ref = np.array([-1.1, -1.1])
        cand = np.array([0.6, 0.6])
        v1 = nehvi_mc(models, cand, list(train), [], ref, 128, np.random.default_rng(3))
        v2 = nehvi_mc(models, cand, list(train), [], ref, 128, np.random.default_rng(3))
        assert v1 >= 0.0
        assert v1 == v2

    def test_pending_points_reduce_value(self):
        train = np.random.default_rng(6).uniform(size=(5, 2))
        models = interpolating_models(
            train, [train[:, 0] - 0.5, train[:, 1] - 0.5], lengthscales=[0.6, 0.6], noise=1e-4
        )
        ref = np.array([-1.1, -1.1])
        cand = np.array([0.7, 0.7])
        free = nehvi_mc(models, cand, list(train), [], ref, 2048, np.random.default_rng(4))
        blocked = nehvi_mc(
            models, cand, list(train), [cand + 1e-4], ref, 2048, np.random.default_rng(4)
        )
        assert blocked < free


class TestGenerateBatch:
    @pytest.fixture(scope="class")
    def fitted(self, app1):
        history = make_history(app1, 5, seed=11)
        models = [fit(history, j, seed=0) for j in range(2)]
        return models, history

    def test_q1_single_candidate(self, fitted):
        models, history = fitted
        batch = generate_batch(models, history, q=1, rng=np.random.default_rng(0))
        assert batch.q == 1
        assert batch.candidates[0].acquisition_value >= 0.0
        assert batch.candidates[0].point.shape == (5,)

    def test_q8_distinct_points(self, fitted):
        models, history = fitted
        ok = 0
        for s in range(20):
            batch = generate_batch(models, history, q=8, rng=np.random.default_rng(500 + s))
            pts = np.stack([c.point for c in batch.candidates])
            d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
            if d[np.triu_indices(8, 1)].min() > 1e-3:
                ok += 1
        assert ok >= 19  # >= 95% of 20 seeded runs

    def test_acquisition_values_weakly_decreasing(self, fitted):
        models, history = fitted
        ok = 0
        for s in range(20):
            batch = generate_batch(models, history, q=8, rng=np.random.default_rng(900 + s))
            vals = [c.acquisition_value for c in batch.candidates]
            if all(vals[i + 1] <= vals[i] + 1e-12 for i in range(len(vals) - 1)):
                ok += 1
        assert ok >= 18  # >= 90% of seeded runs

    def test_points_in_unit_cube_with_predictions(self, fitted):
        models, history = fitted
        batch = generate_batch(models, history, q=3, rng=np.random.default_rng(2))
        for c in batch.candidates:
            assert np.all(c.point >= 0.0) and np.all(c.point <= 1.0)
            assert len(c.predictions) == 2
            assert all(p.variance >= 0 for p in c.predictions)

    def test_seeded_reproducibility(self, fitted):
        models, history = fitted
        b1 = generate_batch(models, history, q=4, rng=np.random.default_rng(3))
        b2 = generate_batch(models, history, q=4, rng=np.random.default_rng(3))
        for c1, c2 in zip(b1.candidates, b2.candidates):
            assert np.array_equal(c1.point, c2.point)
            assert c1.acquisition_value == c2.acquisition_value

    def test_insufficient_data(self, app1):
        history = make_history(app1, 1, seed=0)
        with pytest.raises(InsufficientDataError):
            generate_batch([], history, q=2)


class TestBatchTypes:
    def test_negative_acquisition_rejected(self):
        with pytest.raises(ValueError):
            Candidate(np.zeros(2), -0.1, (PosteriorPrediction(0, 1),))

    def test_coincident_candidates_rejected(self):
        c = Candidate(np.zeros(2), 0.5, (PosteriorPrediction(0, 1),))
        with pytest.raises(ValueError):
            CandidateBatch((c, c))

    def test_default_reference(self):
        assert default_reference_point(2).tolist() == [-1.1, -1.1]
