"""Likelihood of the observation record alone, and its direct maximizer.

The log-likelihood ratio of ``theta`` against ``theta0`` given only ``Y`` is
the difference of the terminal filter log masses of the two parameters, so
nothing beyond :func:`run_filter` is needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filtering import POSITIVITY_FLOOR, as_observed, run_filter
from .kernels import logmass_kernel, scheme_code
from .model import FieldCache, ModelSpec, _phi
from .optimize import maximize_restarts

@dataclass(frozen=True)
class PartialLogLik:
    value: float
    log_mass_theta: float
    log_mass_theta0: float

@dataclass
class MLEResult:
    theta_hat: np.ndarray
    log_mass_at_hat: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)

def log_lik_partial(y_path, spec: ModelSpec, theta, theta0, scheme="euler") -> PartialLogLik:
    """``L^Y(theta, theta0)`` as the difference of two filter log masses."""
    y = as_observed(y_path)
    a = float(run_filter(y, spec, theta, scheme).log_mass[-1])
    b = float(run_filter(y, spec, theta0, scheme).log_mass[-1])
    return PartialLogLik(a - b, a, b)

def innovations_loglik(y_path, spec: ModelSpec, theta, theta0, scheme="euler") -> float:
    """``L^Y(theta, theta0)`` from the filtered drifts of the two parameters.

    ``eps^-2 sum <m1 - m0, dY> - (2 eps^2)^-1 sum (|m1|^2 - |m0|^2) dt`` with
    ``m = C(Y) sigma_hat`` evaluated at the left end of each step.
    """
    y = as_observed(y_path)
    theta = spec.check_theta(theta)
    theta0 = spec.check_theta(theta0)
    if np.array_equal(theta, theta0):
        return 0.0
    cache = FieldCache(spec, y.y[:-1])

    def filtered_drift(th):
        s = run_filter(y, spec, th, scheme).sigma_hat[:-1]
        return np.einsum("nrk,nk->nr", cache.C(th), s)

    m1, m0 = filtered_drift(theta), filtered_drift(theta0)
    inv = spec.epsilon ** -2
    return float(inv * np.sum((m1 - m0) * y.dY)
                 - 0.5 * inv * np.sum((np.sum(m1 ** 2, axis=1) - np.sum(m0 ** 2, axis=1)) * y.dt))

class LogMassObjective:
    """``theta -> terminal filter log mass`` with the base fields cached along ``Y``."""

    def __init__(self, y_path, spec: ModelSpec, scheme="euler"):
        self.y = as_observed(y_path)
        self.spec = spec
        self.code = scheme_code(scheme)
        self.cache = FieldCache(spec, self.y.y[:-1])
        self.dY = np.ascontiguousarray(self.y.dY)
        self.evaluations = 0

    def __call__(self, theta) -> float:
        self.evaluations += 1
        spec = self.spec
        psi = np.asarray(spec.family.psi(theta), float) if spec.dims.L else np.zeros(0)
        lm, _ = logmass_kernel(self.cache.q0, _phi(spec, theta), self.cache.basis, psi,
                               self.dY, self.y.dt, spec.epsilon ** -2,
                               spec.init_dist.astype(float), POSITIVITY_FLOOR, self.code)
        return float(lm)

def mle_partial(y_path, spec: ModelSpec, theta_init, tol=1e-8, max_iter=500, restarts=3,
                seed=0, scheme="euler") -> MLEResult:
    """Maximize the filter log mass over the admissible box.

    Nelder-Mead from ``theta_init`` plus ``restarts`` seeded jittered starts;
    the best objective wins (ties keep the first). The objective does not
    involve any reference parameter.
    """
    theta_init = spec.check_theta(theta_init)
    obj = LogMassObjective(y_path, spec, scheme)
    res = maximize_restarts(obj, theta_init, spec.box.lower, spec.box.upper, tol=tol,
                            max_iter=max_iter, restarts=restarts, seed=seed)
    trace = [(th.tolist(), f) for th, f in res.trace]
    return MLEResult(res.x, res.fun, res.iterations, res.converged, trace)
