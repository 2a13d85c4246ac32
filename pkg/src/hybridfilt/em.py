"""Expectation-maximization from the observation record.

The E-step propagates, alongside the filter, one augmented vector per
sufficient statistic (transition counts and rate-weighted occupations for
each ordered pair of states, the linear drift statistic for each basis
field and the gram entries for each unordered pair of basis fields). All
vectors share the filter's per-step rescaling, so the sum of each one at
the final time is directly the conditional expectation of its statistic.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .complete import expansion, mle_complete
from .errors import ValidationError
from .filtering import POSITIVITY_FLOOR, as_observed
from .kernels import estep_kernel, scheme_code
from .model import FieldCache, ModelSpec
from .partial import LogMassObjective

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilteredStats:
    """Conditional expectations of the complete-data statistics given ``Y``."""
    n_count: np.ndarray
    occupation: np.ndarray
    drift_lin: np.ndarray
    gram: np.ndarray
    theta_ref: np.ndarray
    log_mass: float
    clamp_events: int = 0


def _layout(k, L):
    pairs = np.array([(j, i) for j in range(k) for i in range(k) if j != i],
                     dtype=np.int64).reshape(-1, 2)
    lm_pairs = np.array([(l, m) for l in range(L) for m in range(l, L)],
                        dtype=np.int64).reshape(-1, 2)
    return pairs, lm_pairs


class EStep:
    """E-step bound to one record, reusing the base fields across parameters."""

    def __init__(self, y_path, spec: ModelSpec, scheme="euler"):
        self.y = as_observed(y_path)
        self.spec = spec
        self.code = scheme_code(scheme)
        self.cache = FieldCache(spec, self.y.y[:-1])
        self.dY = np.ascontiguousarray(self.y.dY)
        self.B = np.ascontiguousarray(self.cache.basis)
        self.pairs, self.lm_pairs = _layout(spec.dims.k, spec.dims.L)

    def __call__(self, theta0) -> FilteredStats:
        spec = self.spec
        theta0 = spec.check_theta(theta0)
        k, L = spec.dims.k, spec.dims.L
        out, lm, clamps = estep_kernel(self.cache.Q(theta0), self.cache.C(theta0), self.B,
                                       self.dY, self.y.dt, spec.epsilon ** -2,
                                       spec.init_dist.astype(float), POSITIVITY_FLOOR,
                                       self.code, self.pairs, self.lm_pairs)
        npair = self.pairs.shape[0]
        counts = np.zeros((k, k))
        occ = np.zeros((k, k))
        pj, pi = self.pairs[:, 0], self.pairs[:, 1]
        counts[pj, pi] = out[:npair]
        occ[pj, pi] = out[npair:2 * npair]
        lin = out[2 * npair:2 * npair + L].copy()
        gram = np.zeros((L, L))
        g = out[2 * npair + L:]
        gram[self.lm_pairs[:, 0], self.lm_pairs[:, 1]] = g
        gram[self.lm_pairs[:, 1], self.lm_pairs[:, 0]] = g
        if clamps:
            log.warning("E-step clamped %d negative filter entries; reduce dt", clamps)
        return FilteredStats(counts, occ, lin, gram, theta0, float(lm), int(clamps))


def e_step(y_path, spec: ModelSpec, theta0, scheme="euler") -> FilteredStats:
    """Filtered sufficient statistics under ``theta0`` from one forward pass."""
    return EStep(y_path, spec, scheme)(theta0)


def q_function(stats: FilteredStats, spec: ModelSpec, theta) -> float:
    """EM surrogate ``Q(theta, theta_ref)`` assembled from filtered statistics."""
    theta = spec.check_theta(theta)
    if np.array_equal(theta, stats.theta_ref):
        return 0.0
    return expansion(stats, spec, theta)


def m_step(stats: FilteredStats, spec: ModelSpec, numeric=None) -> np.ndarray:
    """Maximizer of :func:`q_function`; the complete-data formulas applied to filtered statistics."""
    return mle_complete(stats, spec, numeric=numeric)


@dataclass
class EMTrace:
    iterates: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = "max_iter"
    rejected: tuple | None = None

    @property
    def thetas(self):
        return np.array([it[0] for it in self.iterates])

    @property
    def logliks(self):
        return np.array([it[1] for it in self.iterates])

    @property
    def theta(self):
        return self.iterates[-1][0]


DECREASE_SLACK = 1e-9


def em_run(y_path, spec: ModelSpec, theta_init, max_iter=100, tol=1e-6, scheme="euler",
           numeric=None) -> EMTrace:
    """Iterate ``theta <- m_step(e_step(theta))`` from ``theta_init``.

    Each recorded iterate carries ``L^Y(theta_n, theta_init)``. Stops when
    successive parameters differ by less than ``tol`` in sup-norm
    (``stop_reason="tol"``), after ``max_iter`` updates, or when the
    likelihood would drop by more than ``1e-9``; in that case the offending
    parameter is kept in ``rejected`` and not recorded
    (``stop_reason="non_increase"``, usually a sign that ``dt`` is too coarse).
    """
    if max_iter < 1 or not tol > 0:
        raise ValidationError("max_iter must be >= 1 and tol > 0")
    theta = spec.check_theta(theta_init)
    estep = EStep(y_path, spec, scheme)
    objective = LogMassObjective(y_path, spec, scheme)
    stats = estep(theta)
    base = objective(theta)
    trace = EMTrace()
    trace.iterates.append((theta.copy(), 0.0, stats))
    for _ in range(max_iter):
        new = m_step(stats, spec, numeric)
        if np.max(np.abs(new - theta)) < tol:
            new_stats = estep(new)
            ll = objective(new) - base
            if ll >= trace.iterates[-1][1] - DECREASE_SLACK:
                trace.iterates.append((new, ll, new_stats))
            trace.converged = True
            trace.stop_reason = "tol"
            return trace
        new_stats = estep(new)
        ll = objective(new) - base
        if ll < trace.iterates[-1][1] - DECREASE_SLACK:
            trace.rejected = (new, ll, new_stats)
            trace.stop_reason = "non_increase"
            log.warning("likelihood decreased by %.3g; stopping (try a smaller dt)",
                        trace.iterates[-1][1] - ll)
            return trace
        trace.iterates.append((new, ll, new_stats))
        theta, stats = new, new_stats
    return trace
