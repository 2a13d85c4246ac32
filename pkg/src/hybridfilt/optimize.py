"""Box-constrained derivative-free maximization (Nelder-Mead with restarts)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def _initial_simplex(x0, lower, upper, scale=0.1):
    p = x0.size
    width = np.where(np.isfinite(upper - lower), upper - lower, np.maximum(np.abs(x0), 1.0))
    step = scale * np.minimum(np.maximum(np.abs(x0), 0.1), width)
    sim = np.tile(x0, (p + 1, 1))
    for c in range(p):
        s = step[c]
        # step away from the nearer bound so the vertex stays inside the box
        if x0[c] + s > upper[c]:
            s = -s
        sim[c + 1, c] = np.clip(x0[c] + s, lower[c], upper[c])
        if sim[c + 1, c] == x0[c]:
            sim[c + 1, c] = np.clip(x0[c] - s, lower[c], upper[c])
    return sim


def maximize_box(fun, x0, lower, upper, tol=1e-8, max_iter=500) -> SimplexResult:
    """Maximize ``fun`` over the box with Nelder-Mead (trial points are clipped to it).

    Stops when the spread of objective values over the simplex is below
    ``tol`` or after ``max_iter`` iterations. ``trace`` holds the best
    vertex and its objective after every iteration, so its objective column
    never decreases.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    if np.any(lower > upper):
        raise ConfigurationError("empty parameter box: no feasible vertex")
    x0 = np.clip(np.asarray(x0, float), lower, upper)
    f0 = float(fun(x0))
    trace = [(x0.copy(), f0)]

    def neg(x):
        v = fun(x)
        return np.inf if not np.isfinite(v) else -float(v)

    def record(intermediate_result):
        trace.append((np.array(intermediate_result.x), -float(intermediate_result.fun)))

    res = minimize(neg, x0, method="Nelder-Mead", bounds=list(zip(lower, upper)),
                   callback=record,
                   options={"initial_simplex": _initial_simplex(x0, lower, upper),
                            "fatol": tol, "xatol": np.inf, "maxiter": max_iter,
                            "maxfev": 10 * max_iter * (x0.size + 1)})
    x = np.clip(res.x, lower, upper)
    f = -float(res.fun)
    if f < f0:
        x, f = x0, f0
    return SimplexResult(x, f, int(res.nit), bool(res.success), trace)


def maximize_restarts(fun, x0, lower, upper, tol=1e-8, max_iter=500, restarts=3,
                      seed=0, jitter=0.1) -> SimplexResult:
    """Best of a run from ``x0`` and ``restarts`` runs from seeded jittered starts.

    Ties keep the earliest run. The returned trace is the concatenation of
    all runs' traces in order.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    x0 = np.asarray(x0, float)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    starts = [x0]
    scale = np.maximum(np.abs(x0), 0.1)
    for _ in range(restarts):
        starts.append(np.clip(x0 + jitter * scale * rng.standard_normal(x0.size), lower, upper))
    best = None
    trace = []
    iters = 0
    for s in starts:
        r = maximize_box(fun, s, lower, upper, tol, max_iter)
        trace.extend(r.trace)
        iters += r.iterations
        if best is None or r.fun > best.fun:
            best = r
    return SimplexResult(best.x, best.fun, iters, best.converged, trace)
