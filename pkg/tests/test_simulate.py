import numpy as np
import pytest

from hybridfilt import _accel
from hybridfilt.errors import ValidationError
from hybridfilt.scenarios import STATE_DEP_THETA, WONHAM_THETA, state_dependent, wonham
from hybridfilt.simulate import (ObservedPath, complete_stats, estimate_epsilon, extract_counting,
                                 load_observed, load_path, save_path, simulate_path)


def test_same_seed_same_path(wonham_spec):
    a = simulate_path(wonham_spec, WONHAM_THETA, 5.0, 1e-3, 7)
    b = simulate_path(wonham_spec, WONHAM_THETA, 5.0, 1e-3, 7)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.y, b.y)
    assert a.jumps == b.jumps
    c = simulate_path(wonham_spec, WONHAM_THETA, 5.0, 1e-3, 8)
    assert not np.array_equal(a.y, c.y)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("make,theta", [(wonham, WONHAM_THETA), (state_dependent, STATE_DEP_THETA)])
def test_backends_produce_the_same_path(make, theta):
    spec = make()
    a = simulate_path(spec, theta, 5.0, 1e-3, 3, backend="numba")
    b = simulate_path(spec, theta, 5.0, 1e-3, 3, backend="numpy")
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.x_idx, b.x_idx)
    assert np.allclose(a.y, b.y, rtol=0, atol=1e-12)


def test_switch_seed_keeps_noise(wonham_spec):
    a = simulate_path(wonham_spec, WONHAM_THETA, 5.0, 1e-3, 1, switch_seed=10)
    b = simulate_path(wonham_spec, WONHAM_THETA, 5.0, 1e-3, 2, switch_seed=10)
    assert a.jumps == b.jumps
    assert not np.array_equal(a.y, b.y)
    c = simulate_path(wonham_spec, WONHAM_THETA, 5.0, 1e-3, 1, switch_seed=11)
    # shared noise: regular increments differ only by the drift gap 0 or 2 psi dt
    gap = np.abs(np.diff(a.observed().y[:, 0]) - np.diff(c.observed().y[:, 0]))
    assert np.all(np.isclose(gap, 0.0, atol=1e-12) | np.isclose(gap, 2e-3, atol=1e-12))
    assert np.any(gap > 1e-3) and np.any(gap < 1e-12)


def test_jump_records_consistent(wonham_spec):
    p = simulate_path(wonham_spec, [3.0, 2.0, 1.0], 20.0, 1e-3, 5)
    p.check()
    assert len(p.jumps) > 10
    N = extract_counting(p, 2)
    assert N.sum() == len(p.jumps) and N[0, 0] == N[1, 1] == 0
    # alternation in two states
    assert abs(N[1, 0] - N[0, 1]) <= 1
    # jump times are on the grid but not on the regular lattice
    obs = p.observed()
    assert obs.times.size == int(round(20.0 / 1e-3)) + 1


def test_jump_frequency_matches_rate():
    spec = wonham()
    n = sum(len(simulate_path(spec, [2.0, 2.0, 0.0], 50.0, 1e-2, s).jumps) for s in range(4))
    assert abs(n / 200.0 - 2.0) < 0.35


def test_csv_round_trip(tmp_path, wonham_spec):
    p = simulate_path(wonham_spec, WONHAM_THETA, 3.0, 1e-3, 11)
    f = save_path(p, tmp_path / "p.csv")
    q = load_path(f)
    assert np.array_equal(q.times, p.times) and np.array_equal(q.y, p.y)
    assert np.array_equal(q.x_idx, p.x_idx) and q.jumps == p.jumps
    obs = load_observed(f)
    assert np.array_equal(obs.y, p.observed().y)


def test_complete_stats_occupation_sums_to_time(wonham_spec):
    p = simulate_path(wonham_spec, WONHAM_THETA, 10.0, 1e-3, 2)
    s = complete_stats(p, wonham_spec, WONHAM_THETA)
    # unit rates: occupation[j, i] is the time spent in i
    assert np.isclose(s.occupation[1, 0] + s.occupation[0, 1], 10.0, atol=1e-9)
    assert np.isclose(s.gram[0, 0], 10.0, atol=1e-9)


def test_estimate_epsilon():
    spec = wonham(epsilon=0.4)
    p = simulate_path(spec, WONHAM_THETA, 50.0, 1e-3, 0)
    assert abs(estimate_epsilon(p) / 0.4 - 1) < 0.01


def test_invalid_inputs(wonham_spec):
    with pytest.raises(ValidationError):
        simulate_path(wonham_spec, WONHAM_THETA, 1.0, 0.0, 0)
    with pytest.raises(ValidationError):
        ObservedPath(np.array([0.0, 0.0]), np.zeros(2))
    with pytest.raises(ValidationError):
        ObservedPath(np.array([0.0, 1.0]), np.array([0.0, np.nan]))
