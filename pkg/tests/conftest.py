import numpy as np
import pytest

from steerbo.domain import Fidelity
from steerbo.testbed import EvaluationSimulator, app_by_id, simulate_evaluation


@pytest.fixture(scope="session")
def app1():
    return app_by_id("app1")


@pytest.fixture(scope="session")
def tutorial():
    return app_by_id("tutorial")


def make_history(app, n, seed=0, halfwidth=0.05):
    """n seeded formal observations at uniform random points, no delays."""
    sim = EvaluationSimulator(
        formal_noise_halfwidth=halfwidth,
        formal_delay=0.0,
        informal_delay=0.0,
        rng_seed=seed,
    )
    rng = np.random.default_rng(seed)
    return [
        simulate_evaluation(sim, app, rng.uniform(size=app.n), Fidelity.FORMAL, iteration=i + 1)
        for i in range(n)
    ]


@pytest.fixture
def history5(app1):
    return make_history(app1, 5, seed=11)
