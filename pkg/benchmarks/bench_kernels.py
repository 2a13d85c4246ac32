"""Wall-clock comparison of the numba and numpy kernel backends.

Run with ``python3 benchmarks/bench_kernels.py [--steps N] [--particles P]``.
Each kernel is called once to warm up (numba compilation is cached on
disk), then timed as the best of ``--repeat`` calls.
"""
import argparse
import time

import numpy as np

from hybridfilt.em import _layout
from hybridfilt.kernels import EULER, get_backend
from hybridfilt.model import FieldCache, _phi
from hybridfilt.oracle import prefix_tables
from hybridfilt.scenarios import STATE_DEP_THETA, state_dependent
from hybridfilt.simulate import simulate_path


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--particles", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()

    spec = state_dependent()
    th = STATE_DEP_THETA
    dt = 1e-3
    y = simulate_path(spec, th, a.steps * dt, dt, 0).observed()
    cache = FieldCache(spec, y.y[:-1])
    Q, C, B = cache.Q(th), cache.C(th), np.ascontiguousarray(cache.basis)
    dY = np.ascontiguousarray(y.dY)
    inv, s0 = spec.epsilon ** -2, spec.init_dist.copy()
    pairs, lm_pairs = _layout(2, 2)
    phi, psi = _phi(spec, th), np.asarray(spec.family.psi(th), float)

    y_mc = simulate_path(spec, th, 2.0, 1e-4, 1).observed()
    tables = prefix_tables(y_mc, spec, th)
    rng = np.random.default_rng(0)
    x0 = rng.integers(0, 2, a.particles).astype(np.int64)
    expo = rng.standard_exponential((a.particles, 64, 2))
    query = np.array([y_mc.times.size - 1], dtype=np.int64)

    cases = {
        f"filter ({a.steps} steps)":
            lambda m: m.filter_kernel(Q, C, dY, y.dt, inv, s0, 1e-300, EULER),
        f"log mass ({a.steps} steps)":
            lambda m: m.logmass_kernel(cache.q0, phi, cache.basis, psi, dY, y.dt, inv, s0,
                                       1e-300, EULER),
        f"e-step ({a.steps} steps)":
            lambda m: m.estep_kernel(Q, C, B, dY, y.dt, inv, s0, 1e-300, EULER, pairs, lm_pairs),
        f"particles ({a.particles} x {y_mc.times.size - 1} steps)":
            lambda m: m.mc_kernel(*tables, x0, expo, query),
    }
    nb, npy = get_backend("numba"), get_backend("numpy")
    print(f"{'kernel':<40} {'numba [s]':>10} {'numpy [s]':>10} {'speed-up':>9}")
    for name, call in cases.items():
        t_nb = best_of(lambda: call(nb), a.repeat)
        t_np = best_of(lambda: call(npy), a.repeat)
        print(f"{name:<40} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:9.1f}")


if __name__ == "__main__":
    main()
