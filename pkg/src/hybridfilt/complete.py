"""Likelihood ratio of a fully observed path and the exponential-family maximizer."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SingularLikelihoodError, SingularStatisticsError
from .model import ModelSpec, _phi, drift_matrices, rate_matrices


@dataclass(frozen=True)
class CompleteLogLik:
    value: float
    jump_part: float
    drift_part: float


def _offdiag(spec, theta, ys):
    q = rate_matrices(spec, theta, ys)
    k = spec.dims.k
    q[:, np.arange(k), np.arange(k)] = 0.0
    return q


def log_lik_complete(path, spec: ModelSpec, theta, theta0) -> CompleteLogLik:
    """``log dP^theta / dP^theta0`` on ``[0, T]`` for a path with its state record.

    Integrals are left-point sums on the path grid (which contains the jump
    times); the rate ratio at a jump uses ``Y`` at the jump time. A ratio
    with both rates zero counts as 1 (such pairs contribute nothing).
    """
    theta = spec.check_theta(theta)
    theta0 = spec.check_theta(theta0)
    k = spec.dims.k
    t = path.times
    h = np.diff(t)
    yl = path.y[:-1]
    xl = path.x_idx[:-1]
    rows = np.arange(xl.size)

    q1 = _offdiag(spec, theta, path.y)
    q0 = _offdiag(spec, theta0, path.y)

    jump = 0.0
    if path.jumps:
        pos = {tau: n for n, tau in enumerate(t)}
        for tau, i, j in path.jumps:
            n = pos[tau]
            a, b = q1[n, j, i], q0[n, j, i]
            if a == 0.0 and b == 0.0:
                continue
            if b == 0.0:
                raise SingularLikelihoodError(
                    f"jump {i}->{j} at t={tau} has zero rate under theta0 but not under theta")
            jump += math.log(a / b) if a > 0 else -math.inf
    diff = (q1[:-1] - q0[:-1])[rows, :, xl]      # (n, k): rates out of the current state
    jump -= float(np.sum(diff * h[:, None]))

    m1 = drift_matrices(spec, theta, yl)[rows, :, xl]
    m0 = drift_matrices(spec, theta0, yl)[rows, :, xl]
    dY = np.diff(path.y, axis=0)
    inv = spec.epsilon ** -2
    drift = inv * float(np.sum((m1 - m0) * dY)) \
        - 0.5 * inv * float(np.sum((np.sum(m1 * m1, axis=1) - np.sum(m0 * m0, axis=1)) * h))
    return CompleteLogLik(jump + drift, jump, drift)


def expansion(stats, spec: ModelSpec, theta) -> float:
    """Log-likelihood ratio against ``stats.theta_ref`` written through the statistics.

    With ``r = phi(theta) / phi(theta_ref)`` and ``delta = psi(theta) - psi(theta_ref)``::

        sum_{j != i} [n_ji log r_ji - (r_ji - 1) occ_ji]
            + eps^-2 (delta . lin - delta' gram delta / 2)

    Works for any statistics object with the complete-data fields (complete
    or filtered).
    """
    k = spec.dims.k
    ref = np.asarray(stats.theta_ref, float)
    off = ~np.eye(k, dtype=bool)
    r = _phi(spec, theta)[off] / _phi(spec, ref)[off]
    n = np.asarray(stats.n_count)[off]
    occ = np.asarray(stats.occupation)[off]
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(n > 0, n * np.log(r), 0.0)
    val = float(np.sum(lr) - np.sum((r - 1.0) * occ))
    if spec.dims.L:
        delta = np.asarray(spec.family.psi(theta), float) - np.asarray(spec.family.psi(ref), float)
        g = np.asarray(stats.gram)
        val += spec.epsilon ** -2 * float(delta @ stats.drift_lin - 0.5 * delta @ g @ delta)
    return val


def _canonical_argmax(stats, spec: ModelSpec):
    fam = spec.family
    k = spec.dims.k
    ref = np.asarray(stats.theta_ref, float)
    theta = ref.copy()
    phi_ref = _phi(spec, ref)
    n = np.asarray(stats.n_count, float)
    occ = np.asarray(stats.occupation, float)
    ri = fam.rate_index
    status = "ok"
    for c in np.unique(ri[ri >= 0]):
        mask = (ri == c) & ~np.eye(k, dtype=bool)
        num = float(np.sum(n[mask]))
        den = float(np.sum(occ[mask] / phi_ref[mask]))
        if den > 0:
            theta[c] = num / den
        elif num > 0:
            raise SingularStatisticsError(
                f"coordinate {c}: transitions observed but zero occupation")
    di = fam.drift_index
    coords = np.unique(di[di >= 0])
    if coords.size:
        # delta_psi = A (theta_d - ref_d) for the indicator matrix A (L x #coords)
        A = (di[:, None] == coords[None, :]).astype(float)
        G = A.T @ np.asarray(stats.gram, float) @ A
        G = 0.5 * (G + G.T)
        b = A.T @ np.asarray(stats.drift_lin, float)
        w = np.linalg.eigvalsh(G)
        if w.size and w.min() > 1e-12 * max(w.max(), 1e-300):
            step = np.linalg.solve(G, b)
        else:
            status = "rank_deficient"
            step = np.linalg.lstsq(G, b, rcond=None)[0]
            warnings.warn("gram matrix is rank deficient; returning the minimum-norm solution",
                          RuntimeWarning, stacklevel=3)
        theta[coords] = ref[coords] + step
    return theta, status


def mle_complete(stats, spec: ModelSpec, numeric=None, tol=1e-10, max_iter=2000):
    """Maximizer of the exponential-family expansion, projected onto the box.

    Canonical families are solved in closed form (pooled ratio per rate
    coordinate, a symmetric linear solve for the drift coordinates). Other
    families, or ``numeric=True``, use the box-constrained simplex method.
    """
    if numeric is None:
        numeric = not spec.family.canonical
    if not numeric:
        theta, _ = _canonical_argmax(stats, spec)
        return spec.box.project(theta)
    from .optimize import maximize_box
    x0 = spec.box.project(stats.theta_ref)
    res = maximize_box(lambda th: expansion(stats, spec, th), x0, spec.box.lower,
                       spec.box.upper, tol=tol, max_iter=max_iter)
    return spec.box.project(res.x)
