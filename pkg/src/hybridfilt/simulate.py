"""Sample paths of the switching diffusion and their complete-data statistics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from .errors import ValidationError
from .fields import stack_tables
from .kernels import _numba
from .model import ModelSpec, _phi, drift_matrices, rate_matrices

_next_firing = getattr(_numba.next_firing, "py_func", _numba.next_firing)

# streams spawned from one SeedSequence: initial state, switching clocks, Y noise
_INIT, _CLOCK, _NOISE = range(3)


@dataclass(frozen=True)
class ObservedPath:
    """A continuous observation record ``y`` (N, d) on the grid ``times``."""
    times: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, float)
        y = np.asarray(self.y, float)
        if y.ndim == 1:
            y = y[:, None]
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "y", y)
        if t.ndim != 1 or t.size < 2 or y.shape[0] != t.size:
            raise ValidationError("observed path needs >= 2 grid points matching y")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("observation times must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValidationError("observed path contains non-finite values")

    @property
    def T(self):
        return float(self.times[-1] - self.times[0])

    @property
    def dt(self):
        return np.diff(self.times)

    @property
    def dY(self):
        return np.diff(self.y, axis=0)


@dataclass(frozen=True)
class HybridPath:
    times: np.ndarray
    x_idx: np.ndarray
    y: np.ndarray
    jumps: tuple
    seed: int | None = None
    dt: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def k_seen(self):
        return int(self.x_idx.max()) + 1

    def regular_mask(self):
        """True at grid points that are not inserted jump times."""
        if not self.jumps:
            return np.ones(self.times.size, dtype=bool)
        jt = np.array([j[0] for j in self.jumps])
        return ~np.isin(self.times, jt)

    def observed(self, regular=True) -> ObservedPath:
        """The Y record alone, by default on the regular simulation grid."""
        if regular:
            mask = self.regular_mask()
            return ObservedPath(self.times[mask], self.y[mask])
        return ObservedPath(self.times, self.y)

    def check(self):
        """Raise if the jump records disagree with the state sequence."""
        t, x = self.times, self.x_idx
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValidationError("grid must start at 0 and increase strictly")
        changes = np.flatnonzero(np.diff(x) != 0) + 1
        if len(changes) != len(self.jumps):
            raise ValidationError("state changes and jump records disagree")
        for idx, (tau, a, b) in zip(changes, self.jumps):
            if t[idx] != tau or x[idx - 1] != a or x[idx] != b or a == b:
                raise ValidationError(f"inconsistent jump record at t={tau}")


def _grid(T, dt):
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if not T >= dt:
        raise ValidationError("horizon must be at least one step")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(T, 1.0):
        n = int(math.ceil(T / dt))
    t = np.arange(n + 1, dtype=float) * dt
    t[-1] = T
    return t


def _streams(seed, switch_seed):
    base = np.random.SeedSequence(seed).spawn(3)
    sw = base if switch_seed is None else np.random.SeedSequence(switch_seed).spawn(3)
    return sw[_INIT], sw[_CLOCK], base[_NOISE]


def _gen(ss):
    return np.random.Generator(np.random.Philox(ss))


def _python_loop(spec, theta, tgrid, xi, expo, x0):
    """Reference stepping loop; evaluates arbitrary fields through the model API."""
    k, d = spec.dims.k, spec.dims.d
    eps = spec.epsilon
    cap = expo.shape[0]
    times = [tgrid[0]]
    xs = [x0]
    ys = [spec.y0.copy()]
    jumps = []
    i = x0
    A = np.zeros(k)
    y = spec.y0.copy()

    def rates(pt, state):
        return rate_matrices(spec, theta, pt[None])[0][:, state]

    ra = rates(y, i)
    for m in range(tgrid.size - 1):
        hm = tgrid[m + 1] - tgrid[m]
        drift = drift_matrices(spec, theta, y[None])[0][:, i]
        yb = y + drift * hm + eps * math.sqrt(hm) * xi[m]
        ya = y.copy()
        ta, tb = tgrid[m], tgrid[m + 1]
        while True:
            rb = rates(yb, i)
            span = tb - ta
            inc = 0.5 * (ra + rb) * span
            inc[i] = 0.0
            target, frac = _next_firing(A, expo[len(jumps)], inc, i)
            if target < 0:
                A += inc
                break
            tau = ta + frac * span
            if tau <= ta:
                tau = np.nextafter(ta, np.inf)
            if tau >= tb:
                tau = np.nextafter(tb, -np.inf)
            lam = (tau - ta) / span
            ya = ya + lam * (yb - ya)
            if len(jumps) >= cap - 1:
                return None
            jumps.append((float(tau), int(i), int(target)))
            i = target
            A[:] = 0.0
            times.append(tau)
            xs.append(i)
            ys.append(ya.copy())
            ta = tau
            ra = rates(ya, i)
        y = yb
        times.append(tb)
        xs.append(i)
        ys.append(y.copy())
        ra = rb
    return np.array(times), np.array(xs, dtype=np.int64), np.array(ys).reshape(-1, d), jumps


def _compiled_loop(spec, theta, tgrid, xi, expo, x0, tabs):
    rt, dtabs = tabs
    phi = _phi(spec, theta)
    psi = np.asarray(spec.family.psi(theta), float) if spec.family.L else np.zeros(0)
    times, xs, ys, jumps, cnt, nj = _numba.simulate_kernel(
        tgrid, xi, expo, int(x0), spec.y0.copy(), float(spec.epsilon), phi,
        *rt, *dtabs, psi)
    if cnt < 0:
        return None
    jl = [(float(jumps[a, 0]), int(jumps[a, 1]), int(jumps[a, 2])) for a in range(nj)]
    return times[:cnt].copy(), xs[:cnt].copy(), ys[:cnt].copy(), jl


def _drift_tables(spec):
    if spec.family.L == 0:
        d, k = spec.dims.d, spec.dims.k
        P = d * k
        return (np.zeros((0, P)), np.zeros((0, P, d)), np.zeros((0, P, d, d)),
                np.zeros((0, 1)), np.zeros(0, dtype=np.int64), np.zeros((0, 1, P)))
    return stack_tables(spec.family.mu_basis)


def simulate_path(spec: ModelSpec, theta, T: float, dt: float, seed: int, *,
                  switch_seed: int | None = None, backend: str | None = None) -> HybridPath:
    """Simulate ``(X, Y)`` on ``[0, T]`` with an Euler step ``dt``.

    Switching uses competing exponential clocks whose integrals are
    accumulated by the trapezoid rule along the discretized ``Y``; a clock
    that fires inside a step splits it at the linearly interpolated firing
    time, which is inserted into the grid. The drift follows the new state
    from the next regular step on.

    ``switch_seed`` replaces the streams for ``X_0`` and the clocks while the
    ``Y`` noise still comes from ``seed``.
    """
    theta = spec.check_theta(theta)
    tgrid = _grid(float(T), float(dt))
    n = tgrid.size - 1
    k, d = spec.dims.k, spec.dims.d
    ss_init, ss_clock, ss_noise = _streams(seed, switch_seed)
    x0 = int(_gen(ss_init).choice(k, p=spec.init_dist))
    xi = _gen(ss_noise).standard_normal((n, d))

    if backend is None:
        backend = "numba" if _accel.USE_NUMBA else "numpy"
    tabs = None
    if backend == "numba":
        rt = stack_tables([spec.family.q0])
        dtabs = _drift_tables(spec)
        if rt is not None and dtabs is not None:
            tabs = (rt, dtabs)

    rate_cap = spec.family.q0.bound * float(np.max(_phi(spec, theta), initial=0.0)) * max(k - 1, 1)
    lam = rate_cap * tgrid[-1]
    cap = int(lam + 6.0 * math.sqrt(lam) + 16)
    while True:
        expo = _gen(ss_clock).standard_exponential((cap, k))
        if tabs is not None:
            out = _compiled_loop(spec, theta, tgrid, xi, expo, x0, tabs)
        else:
            out = _python_loop(spec, theta, tgrid, xi, expo, x0)
        if out is not None:
            break
        cap *= 2
    times, xs, ys, jumps = out
    return HybridPath(times, xs, ys, tuple(jumps), seed=seed, dt=float(dt),
                      meta={"switch_seed": switch_seed, "spec_hash": spec.digest()})


def extract_counting(path: HybridPath, k: int | None = None) -> np.ndarray:
    """Matrix of transition counts, entry ``[j, i]`` = number of ``i -> j`` jumps."""
    if k is None:
        k = max([path.k_seen] + [max(a, b) + 1 for _, a, b in path.jumps])
    N = np.zeros((k, k), dtype=np.int64)
    for _, a, b in path.jumps:
        N[b, a] += 1
    return N


@dataclass
class CompleteStats:
    n_count: np.ndarray
    occupation: np.ndarray
    drift_lin: np.ndarray
    gram: np.ndarray
    theta_ref: np.ndarray


def complete_stats(path: HybridPath, spec: ModelSpec, theta0) -> CompleteStats:
    """Exponential-family statistics of a fully observed path (left-point sums)."""
    theta0 = spec.check_theta(theta0)
    k, L = spec.dims.k, spec.dims.L
    h = np.diff(path.times)
    yl = path.y[:-1]
    xl = path.x_idx[:-1]
    dY = np.diff(path.y, axis=0)
    off = rate_matrices(spec, theta0, yl)
    idx = np.arange(k)
    off[:, idx, idx] = 0.0
    onehot = np.eye(k)[xl]
    occ = np.einsum("nji,ni,n->ji", off, onehot, h)
    mu0 = drift_matrices(spec, theta0, yl)[np.arange(len(xl)), :, xl]
    basis = np.empty((L, len(xl), spec.dims.d))
    for l, f in enumerate(spec.family.mu_basis):
        basis[l] = f(yl)[np.arange(len(xl)), :, xl]
    lin = np.einsum("lnr,nr->l", basis, dY - mu0 * h[:, None])
    gram = np.einsum("lnr,mnr,n->lm", basis, basis, h)
    gram = 0.5 * (gram + gram.T)
    return CompleteStats(extract_counting(path, k), occ, lin, gram, theta0)


def estimate_epsilon(path) -> float:
    """Diffusion coefficient from the realized quadratic variation of ``Y``."""
    t = np.asarray(path.times, float)
    y = np.asarray(path.y, float).reshape(t.size, -1)
    T = t[-1] - t[0]
    if t.size < 2 or not T > 0:
        raise ValidationError("need a path with positive duration")
    qv = np.sum(np.diff(y, axis=0) ** 2)
    return float(math.sqrt(qv / (y.shape[1] * T)))


# ---------------------------------------------------------------- serialization

def save_path(path: HybridPath, csv_file) -> Path:
    """Write the path CSV and a ``.json`` sidecar with jumps and metadata."""
    csv_file = Path(csv_file)
    d = path.y.shape[1]
    header = ",".join(["t", "x_idx"] + [f"y_{r + 1}" for r in range(d)])
    with open(csv_file, "w") as fh:
        fh.write(header + "\n")
        for t, x, row in zip(path.times, path.x_idx, path.y):
            fh.write(",".join([f"{t:.17g}", str(int(x))] + [f"{v:.17g}" for v in row]) + "\n")
    side = {"jumps": [list(j) for j in path.jumps], "seed": path.seed, "dt": path.dt,
            "T": path.T, **path.meta}
    csv_file.with_suffix(".json").write_text(json.dumps(side, indent=1))
    return csv_file


def _read_csv(csv_file):
    csv_file = Path(csv_file)
    with open(csv_file) as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    data = np.loadtxt(csv_file, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def load_path(csv_file) -> HybridPath:
    csv_file = Path(csv_file)
    header, data = _read_csv(csv_file)
    if header[:2] != ["t", "x_idx"]:
        raise ValidationError(f"{csv_file}: not a hybrid path CSV")
    side = {}
    sc = csv_file.with_suffix(".json")
    if sc.exists():
        side = json.loads(sc.read_text())
    jumps = tuple((float(t), int(a), int(b)) for t, a, b in side.pop("jumps", []))
    seed = side.pop("seed", None)
    dt = side.pop("dt", None)
    side.pop("T", None)
    return HybridPath(data[:, 0].copy(), data[:, 1].astype(np.int64), data[:, 2:].copy(),
                      jumps, seed=seed, dt=dt, meta=side)


def load_observed(csv_file, regular=True) -> ObservedPath:
    """Read the ``Y`` record from a path CSV or a plain ``t,y_1..y_d`` CSV."""
    header, data = _read_csv(csv_file)
    if header[:2] == ["t", "x_idx"]:
        return load_path(csv_file).observed(regular=regular)
    if header[0] != "t":
        raise ValidationError(f"{csv_file}: first column must be 't'")
    return ObservedPath(data[:, 0].copy(), data[:, 1:].copy())
