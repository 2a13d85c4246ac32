import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import single_state, symmetric_chain
from hybridfilt.em import e_step, em_run, m_step, q_function
from hybridfilt.errors import ValidationError
from hybridfilt.model import FieldCache
from hybridfilt.oracle import ode_expected_counts
from hybridfilt.partial import LogMassObjective, log_lik_partial
from hybridfilt.scenarios import STATE_DEP_THETA, WONHAM_THETA, state_dependent, wonham
from hybridfilt.simulate import ObservedPath, simulate_path


@pytest.fixture(scope="module")
def sd():
    spec = state_dependent()
    return spec, simulate_path(spec, STATE_DEP_THETA, 5.0, 1e-3, 13).observed()


def test_driftless_counts_follow_the_prior():
    spec = symmetric_chain(k=3, rate=1.0)
    t = np.linspace(0, 3, 30001)
    y = ObservedPath(t, np.random.default_rng(1).normal(size=(t.size, 1)))
    s = e_step(y, spec, [0.8])
    Q = FieldCache(spec, np.zeros((1, 1))).Q(np.array([0.8]))[0]
    ref = ode_expected_counts(Q, spec.init_dist, 3.0)
    off = ~np.eye(3, dtype=bool)
    assert np.allclose(s.n_count[off], ref[off], rtol=1e-3)
    # occupation under unit base rates times 0.8: 0.8 * 3 / 3 per pair
    assert np.allclose(s.occupation[off], 0.8, rtol=1e-9)
    assert abs(s.log_mass) < 1e-12


def test_single_state_statistics():
    spec = single_state(drift=1.0, epsilon=0.5)
    y = simulate_path(spec, [0.5], 4.0, 1e-3, 3).observed()
    yt = y.y[-1, 0] - y.y[0, 0]
    s = e_step(y, spec, [0.3], "exact")
    assert abs(s.gram[0, 0] - 4.0) < 1e-10
    assert abs(s.drift_lin[0] - (yt - 0.3 * 4.0)) < 1e-10
    assert abs(m_step(s, spec)[0] - yt / 4.0) < 1e-10
    # the Euler step weights each increment by 1 / (1 + a_n)
    e = e_step(y, spec, [0.3])
    a = 4.0 * 0.3 * y.dY[:, 0]
    assert abs(e.gram[0, 0] - np.sum(y.dt / (1 + a))) < 1e-9
    assert abs(e.gram[0, 0] - 4.0) < 1e-2


@pytest.mark.parametrize("scheme", ["euler", "exact"])
def test_gram_symmetric_and_nonnegative(sd, scheme):
    spec, y = sd
    s = e_step(y, spec, [1.3, 0.6, 1.1, 0.9], scheme)
    assert np.array_equal(s.gram, s.gram.T)
    assert np.all(np.linalg.eigvalsh(s.gram) >= -1e-12)
    assert np.all(s.n_count >= 0) and np.all(s.occupation >= 0)
    assert np.all(np.diag(s.n_count) == 0)


def test_statistics_share_the_filter_scaling(sd):
    spec, y = sd
    from hybridfilt.filtering import run_filter
    th = np.array([1.3, 0.6, 1.1, 0.9])
    s = e_step(y, spec, th)
    assert abs(s.log_mass - run_filter(y, spec, th).log_mass[-1]) < 1e-10
    # each basis field lives in one state only, so their product vanishes
    assert s.gram[0, 1] == 0.0
    yl = y.y[:-1, 0]
    assert 0 < s.gram[0, 0] < np.sum((1 - yl) ** 2 * y.dt)
    assert 0 < s.gram[1, 1] < np.sum((1 + yl) ** 2 * y.dt)
    assert 0 < s.occupation[0, 1] < 0.6 * 5.0


def test_mstep_is_the_pooled_ratio(sd):
    spec, y = sd
    s = e_step(y, spec, STATE_DEP_THETA)
    th = m_step(s, spec)
    assert abs(th[0] - s.n_count[1, 0] / s.occupation[1, 0]) < 1e-12
    assert abs(th[1] - s.n_count[0, 1] / s.occupation[0, 1]) < 1e-12
    assert np.allclose(th[2:], STATE_DEP_THETA[2:] + np.linalg.solve(s.gram, s.drift_lin))


def test_score_identity_for_the_euler_scheme(sd):
    """The gradient of the log mass equals the gradient of Q at the reference."""
    spec, y = sd
    th0 = np.array([1.3, 0.6, 1.1, 0.9])
    s = e_step(y, spec, th0)
    obj = LogMassObjective(y, spec)
    for c in range(4):
        e = np.zeros(4)
        e[c] = 1e-5
        g_l = (obj(th0 + e) - obj(th0 - e)) / 2e-5
        g_q = (q_function(s, spec, th0 + e) - q_function(s, spec, th0 - e)) / 2e-5
        assert abs(g_l - g_q) < 1e-5 * max(1.0, abs(g_l))


@settings(max_examples=20, deadline=None)
@given(st.tuples(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.1, 4), st.floats(0.1, 4)))
def test_surrogate_lower_bound(sd, theta):
    spec, y = sd
    s = e_step(y, spec, STATE_DEP_THETA)
    assert q_function(s, spec, theta) <= log_lik_partial(y, spec, theta, STATE_DEP_THETA).value + 5e-3
    assert q_function(s, spec, STATE_DEP_THETA) == 0.0


def test_em_run_monotone_and_fixed_point():
    spec = wonham()
    y = simulate_path(spec, [2.0, 1.0, 1.0], 40.0, 1e-3, 4).observed()
    tr = em_run(y, spec, [1.0, 2.0, 0.6], max_iter=200, tol=1e-7)
    assert tr.converged and tr.stop_reason == "tol"
    assert np.all(np.diff(tr.logliks) >= -1e-9)
    assert tr.logliks[0] == 0.0
    th = tr.theta
    assert np.max(np.abs(m_step(e_step(y, spec, th), spec) - th)) < 1e-6
    obj = LogMassObjective(y, spec)
    for c in range(3):
        e = np.zeros(3)
        e[c] = 1e-4
        assert abs(obj(th + e) - obj(th - e)) / 2e-4 < 1e-2


def test_em_argument_checks(sd):
    spec, y = sd
    with pytest.raises(ValidationError):
        em_run(y, spec, STATE_DEP_THETA, max_iter=0)
