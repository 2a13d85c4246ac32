"""Unnormalized filter and fixed-point smoother along an observed ``Y`` record.

The filter vector is stored as a unit-sum direction ``sigma_hat`` together
with the log of its total mass, so that long records neither underflow nor
overflow. Two time discretizations are available:

``"euler"``
    Euler-Maruyama step of ``d sigma = eps^-2 diag(sigma) C^T dY + Q sigma dt``.
``"exact"``
    Multiply by the Gaussian likelihood ratio of the increment, then apply
    ``I + Q dt`` (a discrete hidden-Markov forward step).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .kernels import EULER, filter_kernel, scheme_code
from .model import FieldCache, ModelSpec
from .simulate import ObservedPath

log = logging.getLogger(__name__)

POSITIVITY_FLOOR = 1e-300


def as_observed(y_path) -> ObservedPath:
    if isinstance(y_path, ObservedPath):
        return y_path
    if hasattr(y_path, "observed"):
        return y_path.observed()
    if isinstance(y_path, tuple) and len(y_path) == 2:
        return ObservedPath(*y_path)
    raise ValidationError("expected an ObservedPath, a HybridPath or a (times, y) pair")


@dataclass(frozen=True)
class FilterTrajectory:
    """Rescaled unnormalized filter.

    ``exp(log_mass[n]) * sigma_hat[n]`` is the unnormalized filter at
    ``times[n]``; ``sigma_hat[n]`` is also the conditional law of the state.
    """
    times: np.ndarray
    sigma_hat: np.ndarray
    log_mass: np.ndarray
    theta: np.ndarray
    clamp_events: int = 0
    scheme: str = "euler"

    @property
    def unnormalized(self):
        return np.exp(self.log_mass)[:, None] * self.sigma_hat


@dataclass(frozen=True)
class SmootherResult:
    tau: float
    probs: np.ndarray
    requested: float | None = None

    @property
    def snapped(self):
        return self.requested is not None and self.requested != self.tau


def _drive(y: ObservedPath, spec: ModelSpec, theta):
    theta = spec.check_theta(theta)
    cache = FieldCache(spec, y.y[:-1])
    return theta, cache.Q(theta), cache.C(theta)


def run_filter(y_path, spec: ModelSpec, theta, scheme: str = "euler") -> FilterTrajectory:
    """Propagate the unnormalized filter along ``y_path`` at parameter ``theta``.

    Fields are evaluated at the left end of each observation interval.
    Negative entries (possible with the Euler step when ``dt`` is too large)
    are replaced by a tiny positive floor and counted in ``clamp_events``.
    """
    y = as_observed(y_path)
    code = scheme_code(scheme)
    theta, Q, C = _drive(y, spec, theta)
    sig, lm, clamps = filter_kernel(Q, C, np.ascontiguousarray(y.dY), y.dt,
                                    spec.epsilon ** -2, spec.init_dist.astype(float),
                                    POSITIVITY_FLOOR, code)
    if clamps:
        log.warning("filter clamped %d negative entries; reduce dt", clamps)
    return FilterTrajectory(y.times, sig, lm, theta, int(clamps), scheme)


def log_total_mass(traj: FilterTrajectory) -> float:
    """Log of the terminal unnormalized mass (the Bayes normalizing constant)."""
    return float(traj.log_mass[-1])


def _log_emission_factors(spec, C, dY, h, scheme):
    """Per-step, per-state log multipliers of the observation part of the step."""
    g = np.einsum("nrk,nr->nk", C, dY)
    inv = spec.epsilon ** -2
    if scheme_code(scheme) == EULER:
        f = 1.0 + inv * g
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(f, 0.0)), int(np.count_nonzero(f <= 0.0))
    c2 = np.einsum("nrk,nrk->nk", C, C)
    return inv * (g - 0.5 * c2 * h[:, None]), 0


def scalar_mass(y_path, spec: ModelSpec, theta, traj: FilterTrajectory | None = None):
    """Log mass from the scalar recursion ``dm = eps^-2 m <C sigma_hat, dY>``.

    This propagates the total mass on its own, driven by the filtered drift,
    and agrees with ``traj.log_mass`` because the columns of ``Q`` sum to zero.
    """
    y = as_observed(y_path)
    if traj is None:
        traj = run_filter(y, spec, theta)
    theta, _, C = _drive(y, spec, theta)
    s = traj.sigma_hat[:-1]
    if scheme_code(traj.scheme) == EULER:
        # a single factor 1 + a may be negative while the mixture stays positive
        g = np.einsum("nrk,nr->nk", C, y.dY)
        with np.errstate(divide="ignore", invalid="ignore"):
            inc = np.log(np.sum(s * (1.0 + spec.epsilon ** -2 * g), axis=1))
    else:
        le, _ = _log_emission_factors(spec, C, y.dY, y.dt, traj.scheme)
        shift = le.max(axis=1)
        inc = shift + np.log(np.sum(s * np.exp(le - shift[:, None]), axis=1))
    out = np.empty(y.times.size)
    out[0] = np.log(spec.init_dist.sum())
    out[1:] = out[0] + np.cumsum(inc)
    return out


def _snap(times, tau):
    if not times[0] <= tau <= times[-1]:
        raise ValidationError(f"tau={tau} outside [{times[0]}, {times[-1]}]")
    n = int(np.argmin(np.abs(times - tau)))
    return n


def run_smoother(y_path, spec: ModelSpec, theta, tau, scheme: str = "euler",
                 traj: FilterTrajectory | None = None):
    """Conditional law of the state at ``tau`` given the whole record.

    Starts from the filter at ``tau`` and applies only the observation
    factors on ``(tau, T]``, in the same rescaled form as the filter.
    ``tau`` may be a scalar or a sequence; off-grid values are snapped to
    the nearest grid time (``SmootherResult.requested`` keeps the input).
    """
    y = as_observed(y_path)
    if traj is None:
        traj = run_filter(y, spec, theta, scheme)
    _, _, C = _drive(y, spec, theta)
    le, bad = _log_emission_factors(spec, C, y.dY, y.dt, traj.scheme)
    if bad:
        log.warning("smoother clamped %d non-positive factors; reduce dt", bad)
        le = np.maximum(le, np.log(np.finfo(float).tiny))
    # suffix[n] = sum of log factors over steps n..N-1
    suffix = np.zeros((y.times.size, spec.dims.k))
    suffix[:-1] = np.cumsum(le[::-1], axis=0)[::-1]
    scalar = np.ndim(tau) == 0
    out = []
    for t in np.atleast_1d(np.asarray(tau, float)):
        n = _snap(y.times, t)
        if n == y.times.size - 1:
            p = traj.sigma_hat[n].copy()
        else:
            p = traj.sigma_hat[n] * np.exp(suffix[n] - suffix[n].max())
            p /= p.sum()
        out.append(SmootherResult(float(y.times[n]), p, float(t)))
    return out[0] if scalar else out
