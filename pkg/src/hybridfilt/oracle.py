"""Independent reference computations used to check the filter and the E-step.

``hmm_forward_oracle`` is a textbook forward algorithm on the observation
grid. ``mc_conditional_oracle`` simulates the hidden chain given the frozen
``Y`` record under the reference measure and reweights each particle by its
Girsanov density, so every filtered quantity becomes a self-normalized
weighted average.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import StepTooLargeError, ValidationError
from .filtering import as_observed
from .kernels import mc_kernel
from .model import FieldCache, ModelSpec, assemble_generator

_CHUNK = 25_000


@dataclass(frozen=True)
class OracleEstimate:
    value: np.ndarray | float
    std_error: np.ndarray | float
    n_particles: int = 0


def _gauss_logpdf(x, mean, var):
    # independent diagonal Gaussian log density, summed over the last axis
    z = x - mean
    return -0.5 * np.sum(z * z, axis=-1) / var - 0.5 * x.shape[-1] * math.log(2 * math.pi * var)


def hmm_forward_oracle(y_path, spec: ModelSpec, theta):
    """Forward algorithm for the discrete chain observed through Gaussian increments.

    Transition ``T_m = I + Q(Y_m) dt`` (clipped to [0, 1], columns
    renormalized), emission ``dY_m ~ N(mu(x, Y_m) dt, eps^2 dt I)``.

    Returns
    -------
    probs : ndarray (N, k)
        Normalized forward probabilities on the grid.
    log_evidence : ndarray (N,)
        Accumulated log evidence minus the log density of the increments under
        driftless Brownian motion, i.e. comparable with the filter log mass.
    """
    y = as_observed(y_path)
    h = y.dt
    if np.ptp(h) > 1e-9 * h.max():
        raise ValidationError("the forward oracle needs a uniform grid")
    dt = float(h[0])
    theta = spec.check_theta(theta)
    cache = FieldCache(spec, y.y[:-1])
    Q = cache.Q(theta)
    C = cache.C(theta)
    k = spec.dims.k
    if dt * np.max(-Q[:, np.arange(k), np.arange(k)], initial=0.0) >= 1.0:
        raise StepTooLargeError("dt times the largest exit rate must be below 1")
    var = spec.epsilon ** 2 * dt
    dY = y.dY
    # log emission density of each increment in each state, and the base term
    le = np.stack([_gauss_logpdf(dY, C[:, :, a] * dt, var) for a in range(k)], axis=1)
    base = _gauss_logpdf(dY, 0.0, var)
    probs = np.empty((y.times.size, k))
    ev = np.empty(y.times.size)
    alpha = spec.init_dist / spec.init_dist.sum()
    probs[0] = alpha
    ev[0] = math.log(spec.init_dist.sum())
    eye = np.eye(k)
    for m in range(dY.shape[0]):
        trans = np.clip(eye + Q[m] * dt, 0.0, 1.0)
        trans /= trans.sum(axis=0, keepdims=True)
        top = le[m].max()
        joint = alpha * np.exp(le[m] - top)
        pred = trans @ joint
        s = pred.sum()
        alpha = pred / s
        probs[m + 1] = alpha
        ev[m + 1] = ev[m] + top + math.log(s) - base[m]
    return probs, ev


FUNCTIONALS = ("filter", "n_count", "occupation", "drift_lin", "gram", "lambda_mass")


@dataclass(frozen=True)
class ParticleSample:
    """Per-particle statistics and log-weights from one conditional simulation."""
    counts: np.ndarray
    occupation: np.ndarray
    drift_lin: np.ndarray
    gram: np.ndarray
    log_weight: np.ndarray
    log_weight_at: np.ndarray
    state_at: np.ndarray
    query: np.ndarray

    @property
    def n_particles(self):
        return self.log_weight.size


def prefix_tables(y, spec: ModelSpec, theta):
    """Cumulative hazards and per-state prefix sums of the path statistics.

    Returns ``haz`` (k, k, N) with ``haz[j, i]`` the trapezoid-rule integral
    of the i->j rate, and prefix sums over steps of the log Girsanov weight
    (N, k), rate-weighted occupation (N, k, k), lin (N, L, k) and gram
    (N, L, L, k) increments for each held state.
    """
    k = spec.dims.k
    cache = FieldCache(spec, y.y)
    qoff = cache.offdiag(theta)
    qoff[:, np.arange(k), np.arange(k)] = 0.0
    h = y.dt
    dY = y.dY
    mu = cache.C(theta)[:-1]
    B = cache.basis[:, :-1]

    def prefix(inc):
        out = np.zeros((inc.shape[0] + 1,) + inc.shape[1:])
        np.cumsum(inc, axis=0, out=out[1:])
        return out

    haz = prefix(0.5 * (qoff[:-1] + qoff[1:]) * h[:, None, None])
    inv = spec.epsilon ** -2
    lw = inv * (np.einsum("nrk,nr->nk", mu, dY)
                - 0.5 * np.einsum("nrk,nrk->nk", mu, mu) * h[:, None])
    occ = qoff[:-1] * h[:, None, None]
    resid = dY[:, :, None] - mu * h[:, None, None]
    lin = np.einsum("lnrk,nrk->nlk", B, resid)
    gram = np.einsum("lnrk,mnrk->nlmk", B, B) * h[:, None, None, None]
    return (np.ascontiguousarray(haz.transpose(1, 2, 0)), prefix(lw), prefix(occ),
            prefix(lin), prefix(gram))


def sample_particles(y_path, spec: ModelSpec, theta, n_particles: int, seed: int,
                     query_times=()) -> ParticleSample:
    """Simulate the chain given ``Y`` and record everything the estimators need."""
    if n_particles < 2:
        raise ValidationError("need at least two particles")
    y = as_observed(y_path)
    theta = spec.check_theta(theta)
    k = spec.dims.k
    tables = prefix_tables(y, spec, theta)
    haz = tables[0]
    query = np.array(sorted(int(np.argmin(np.abs(y.times - t))) for t in query_times),
                     dtype=np.int64)
    lam = float(haz[:, :, -1].sum(axis=0).max())
    cap0 = int(lam + 6.0 * math.sqrt(lam) + 16)
    parts = []
    n_chunks = -(-n_particles // _CHUNK)
    for c, ss in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        P = min(_CHUNK, n_particles - c * _CHUNK)
        s_init, s_clock = ss.spawn(2)
        x0 = np.random.Generator(np.random.Philox(s_init)).choice(k, size=P, p=spec.init_dist)
        cap = cap0
        while True:
            expo = np.random.Generator(np.random.Philox(s_clock)).standard_exponential((P, cap, k))
            out = mc_kernel(*tables, x0.astype(np.int64), expo, query)
            if out[-1] == 0:
                break
            cap *= 2
        parts.append(out[:-1])
    cat = [np.concatenate(z, axis=0) for z in zip(*parts)]
    return ParticleSample(*cat, query=y.times[query])


def weighted_mean(values, log_w):
    """Self-normalized weighted mean and its delta-method standard error."""
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    values = np.asarray(values, float)
    flat = values.reshape(values.shape[0], -1)
    mean = w @ flat
    se = np.sqrt((w ** 2) @ (flat - mean) ** 2)
    shape = values.shape[1:]
    return mean.reshape(shape), se.reshape(shape)


def estimate(sample: ParticleSample, functional: str, index=None):
    """Weighted estimate of one functional from a :class:`ParticleSample`.

    ``index`` selects the component: ``(j, i)`` for counts and occupations,
    ``l`` for ``drift_lin``, ``(l, m)`` for ``gram`` and a time for the
    filter (``None`` means the final time). Without an index the whole
    array is estimated.
    """
    lw = sample.log_weight
    P = sample.n_particles
    if functional == "lambda_mass":
        top = lw.max()
        w = np.exp(lw - top)
        val = math.exp(top) * w.mean()
        se = math.exp(top) * w.std(ddof=1) / math.sqrt(P)
        return OracleEstimate(val, se, P)
    if functional == "filter":
        k = sample.counts.shape[1]
        if index is None:
            raise ValidationError("the filter functional needs a query time")
        q = int(np.argmin(np.abs(sample.query - index)))
        onehot = np.eye(k)[sample.state_at[:, q]]
        m, se = weighted_mean(onehot, sample.log_weight_at[:, q])
        return OracleEstimate(m, se, P)
    arrays = {"n_count": sample.counts, "occupation": sample.occupation,
              "drift_lin": sample.drift_lin, "gram": sample.gram}
    if functional not in arrays:
        raise ValidationError(f"unknown functional {functional!r}; expected one of {FUNCTIONALS}")
    vals = arrays[functional]
    if index is not None:
        vals = vals[(slice(None),) + tuple(np.atleast_1d(index))]
    m, se = weighted_mean(vals, lw)
    return OracleEstimate(m if np.ndim(m) else float(m), se if np.ndim(se) else float(se), P)


def mc_conditional_oracle(y_path, spec: ModelSpec, theta, functional: str,
                          n_particles: int, seed: int, index=None) -> OracleEstimate:
    """Weighted conditional Monte-Carlo estimate of one filtered functional.

    ``functional`` is one of ``filter`` (``index`` = query time, default
    the final time), ``n_count``, ``occupation``, ``drift_lin``, ``gram`` or
    ``lambda_mass``.
    """
    y = as_observed(y_path)
    if functional == "filter" and index is None:
        index = float(y.times[-1])
    query = (index,) if functional == "filter" else ()
    sample = sample_particles(y, spec, theta, n_particles, seed, query)
    return estimate(sample, functional, index)


def ode_forward(Q, p0, times):
    """Solution of ``dp/dt = Q p`` for constant ``Q`` via the matrix exponential."""
    from scipy.linalg import expm
    return np.stack([expm(Q * t) @ p0 for t in times])


def ode_expected_counts(Q, p0, T, n_grid=4001):
    """``E[N^{ji}_T] = int_0^T q_ji p_i(t) dt`` for constant ``Q`` (Simpson rule)."""
    from scipy.integrate import simpson
    t = np.linspace(0.0, T, n_grid)
    p = ode_forward(Q, p0, t)
    off = assemble_generator(Q) - np.diag(np.diag(Q))
    off[np.diag_indices_from(off)] = 0.0
    integrand = off[None] * p[:, None, :]
    return simpson(integrand, x=t, axis=0)
