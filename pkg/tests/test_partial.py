import numpy as np
import pytest

from conftest import single_state
from hybridfilt.complete import log_lik_complete
from hybridfilt.partial import LogMassObjective, innovations_loglik, log_lik_partial, mle_partial
from hybridfilt.scenarios import STATE_DEP_THETA, state_dependent
from hybridfilt.simulate import simulate_path


@pytest.fixture(scope="module")
def sd():
    spec = state_dependent()
    return spec, simulate_path(spec, STATE_DEP_THETA, 5.0, 1e-3, 8).observed()


def test_identities(sd):
    spec, y = sd
    a, b, c = [1.5, 0.5, 1.2, 0.8], STATE_DEP_THETA, [0.7, 2.0, 0.4, 1.9]
    assert log_lik_partial(y, spec, a, a).value == 0.0
    L = lambda x, z: log_lik_partial(y, spec, x, z).value  # noqa: E731
    assert abs(L(a, b) + L(b, c) - L(a, c)) < 1e-12
    assert abs(L(a, b) + L(b, a)) == 0.0
    assert innovations_loglik(y, spec, a, a) == 0.0


def test_reference_free_objective_matches_filter(sd):
    spec, y = sd
    obj = LogMassObjective(y, spec)
    th = [1.5, 0.5, 1.2, 0.8]
    assert obj(th) == log_lik_partial(y, spec, th, th).log_mass_theta
    obj_x = LogMassObjective(y, spec, "exact")
    assert abs(obj_x(th) - log_lik_partial(y, spec, th, th, "exact").log_mass_theta) < 1e-9


def test_single_state_partial_equals_complete():
    spec = single_state(drift=1.0, epsilon=0.5)
    path = simulate_path(spec, [0.5], 4.0, 1e-3, 2)
    comp = log_lik_complete(path, spec, [1.2], [0.5]).value
    assert abs(log_lik_partial(path, spec, [1.2], [0.5], "exact").value - comp) < 1e-10
    assert abs(innovations_loglik(path, spec, [1.2], [0.5]) - comp) < 1e-10


def test_maximizer_agrees_with_a_grid_search():
    spec = single_state(drift=1.0, epsilon=0.5)
    y = simulate_path(spec, [0.5], 10.0, 1e-3, 6).observed()
    obj = LogMassObjective(y, spec, "exact")
    grid = np.linspace(-2.0, 2.0, 101)
    best = grid[np.argmax([obj([g]) for g in grid])]
    res = mle_partial(y, spec, [0.0], scheme="exact", restarts=1)
    assert abs(res.theta_hat[0] - best) <= 0.04 + 1e-12
    # closed form for one state: the mean slope of Y
    assert abs(res.theta_hat[0] - (y.y[-1, 0] - y.y[0, 0]) / 10.0) < 1e-4
    assert res.log_mass_at_hat >= obj([best])


def test_mle_partial_is_deterministic(sd):
    spec, y = sd
    r1 = mle_partial(y, spec, STATE_DEP_THETA, restarts=1, max_iter=60)
    r2 = mle_partial(y, spec, STATE_DEP_THETA, restarts=1, max_iter=60)
    assert np.array_equal(r1.theta_hat, r2.theta_hat)
    assert spec.box.contains(r1.theta_hat)
    assert r1.log_mass_at_hat >= LogMassObjective(y, spec)(STATE_DEP_THETA)
