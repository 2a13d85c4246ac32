"""Model definition: dimensions, exponential-family parametrization, Q and C matrices.

Orientation convention used throughout the package: ``Q[j, i]`` is the rate
of the jump ``i -> j``, so ``Q`` acts on column probability vectors and its
columns sum to zero. ``C[:, i]`` is the drift vector in state ``i``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ModelEvaluationError, ParameterOutOfBoxError, ValidationError
from .fields import DriftField, RateField


@dataclass(frozen=True)
class ModelDims:
    k: int
    d: int
    L: int
    p: int

    def __post_init__(self):
        if self.k < 1 or self.d < 1 or self.p < 1 or self.L < 0:
            raise ValidationError(f"invalid dimensions {self}")


@dataclass(frozen=True)
class ParameterBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape:
            raise ValidationError("box bounds must have equal shapes")

    @property
    def empty(self):
        return bool(np.any(self.lower > self.upper))

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def project(self, theta) -> np.ndarray:
        return np.clip(np.asarray(theta, float), self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class ExponentialFamily:
    """Rates ``phi_{ji}(theta) q0_{ji}(y)`` and drift ``sum_l psi_l(theta) mu^l``.

    For the canonical parametrization ``rate_index[j, i]`` names the theta
    coordinate used as ``phi_{ji}`` (``-1`` pins the multiplier at 1) and
    ``drift_index[l]`` likewise for ``psi_l``.
    """
    q0: RateField
    mu_basis: tuple
    phi: Callable[[np.ndarray], np.ndarray]
    psi: Callable[[np.ndarray], np.ndarray]
    canonical: bool = False
    rate_index: np.ndarray | None = None
    drift_index: np.ndarray | None = None

    @classmethod
    def canonical_family(cls, q0: RateField, mu_basis: Sequence[DriftField],
                         rate_index, drift_index=()):
        k = q0.k
        rate_index = np.asarray(rate_index, dtype=np.int64).reshape(k, k).copy()
        np.fill_diagonal(rate_index, -1)
        drift_index = np.asarray(drift_index, dtype=np.int64).reshape(-1)
        if drift_index.size != len(mu_basis):
            raise ValidationError("drift_index must have one entry per basis field")
        used_r = set(rate_index[rate_index >= 0].tolist())
        used_d = set(drift_index[drift_index >= 0].tolist())
        if used_r & used_d:
            raise ValidationError("a theta coordinate cannot drive both rates and drift")

        def phi(theta, _ri=rate_index):
            theta = np.asarray(theta, float)
            out = np.ones(_ri.shape)
            mask = _ri >= 0
            out[mask] = theta[_ri[mask]]
            return out

        def psi(theta, _di=drift_index):
            theta = np.asarray(theta, float)
            out = np.ones(_di.shape)
            mask = _di >= 0
            out[mask] = theta[_di[mask]]
            return out

        return cls(q0, tuple(mu_basis), phi, psi, True, rate_index, drift_index)

    @property
    def L(self):
        return len(self.mu_basis)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    dims: ModelDims
    family: ExponentialFamily
    epsilon: float
    init_dist: np.ndarray
    y0: np.ndarray
    box: ParameterBox
    config: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        init = np.asarray(self.init_dist, float)
        y0 = np.asarray(self.y0, float).reshape(-1)
        object.__setattr__(self, "init_dist", init)
        object.__setattr__(self, "y0", y0)
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if init.shape != (self.dims.k,) or np.any(init < 0) or abs(init.sum() - 1.0) > 1e-12:
            raise ValidationError("init_dist must be a probability vector of length k")
        if y0.shape != (self.dims.d,):
            raise ValidationError("y0 must have length d")
        if self.family.q0.k != self.dims.k or self.family.L != self.dims.L:
            raise ValidationError("family does not match dims")
        if self.box.lower.shape != (self.dims.p,):
            raise ValidationError("parameter box must have length p")

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, float).reshape(-1)
        if theta.shape != (self.dims.p,):
            raise ValidationError(f"theta must have length {self.dims.p}")
        if not self.box.contains(theta):
            raise ParameterOutOfBoxError(f"theta {theta.tolist()} outside the admissible box")
        return theta

    def digest(self) -> str:
        """Stable hash of the serialized configuration (``''`` if unserializable)."""
        if self.config is None:
            return ""
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _phi(spec, theta):
    phi = np.asarray(spec.family.phi(theta), float)
    if not np.all(np.isfinite(phi)):
        j, i = np.argwhere(~np.isfinite(phi))[0]
        raise ModelEvaluationError(f"phi[{j},{i}] is not finite at theta={list(theta)}", i, j)
    return phi


def _check_finite(vals, ys, what):
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        n = bad[0]
        raise ModelEvaluationError(
            f"{what} entry {tuple(bad[1:])} is not finite at y={ys[n].tolist()}",
            i=int(bad[-1]), j=int(bad[-2]) if len(bad) > 2 else None, y=ys[n])


def assemble_generator(offdiag):
    """Fill diagonals so every column of ``offdiag`` (…, k, k) sums to zero.

    The off-diagonal column sum ``S`` is computed once and the diagonal set
    to ``-S``, so ``S + diag`` is exactly zero in floating point.
    """
    Q = np.array(offdiag, dtype=float, copy=True, order="C")
    k = Q.shape[-1]
    diag = Q.reshape(-1, k * k)[:, ::k + 1]   # strided view of the diagonals
    diag[...] = 0.0
    col = Q[..., 0, :].copy()
    for j in range(1, k):      # faster than a reduction over a short middle axis
        col += Q[..., j, :]
    diag[...] = -col.reshape(-1, k)
    return Q


def rate_matrices(spec: ModelSpec, theta, ys) -> np.ndarray:
    """Generators ``Q^theta(y)`` at each row of ``ys``; shape ``(n, k, k)``."""
    ys = np.atleast_2d(np.asarray(ys, float))
    off = spec.family.q0(ys)
    _check_finite(off, ys, "q0")
    return assemble_generator(off * _phi(spec, theta))


def drift_matrices(spec: ModelSpec, theta, ys) -> np.ndarray:
    """Drift matrices ``C^theta(y)`` at each row of ``ys``; shape ``(n, d, k)``."""
    ys = np.atleast_2d(np.asarray(ys, float))
    k, d = spec.dims.k, spec.dims.d
    out = np.zeros((ys.shape[0], d, k))
    if spec.family.L == 0:
        return out
    psi = np.asarray(spec.family.psi(theta), float)
    for coef, field_ in zip(psi, spec.family.mu_basis):
        vals = field_(ys)
        _check_finite(vals, ys, "drift basis")
        out += coef * vals
    return out


def build_q_matrix(spec: ModelSpec, theta, y) -> np.ndarray:
    return rate_matrices(spec, theta, np.asarray(y, float).reshape(1, -1))[0]


def build_c_matrix(spec: ModelSpec, theta, y) -> np.ndarray:
    return drift_matrices(spec, theta, np.asarray(y, float).reshape(1, -1))[0]


class FieldCache:
    """Base fields evaluated once along a fixed path.

    ``q0`` has shape ``(N, k, k)`` and ``basis`` shape ``(L, N, d, k)`` for the
    ``N`` points of ``ys``; parameter-dependent matrices are then cheap
    linear combinations.
    """

    def __init__(self, spec: ModelSpec, ys):
        ys = np.atleast_2d(np.asarray(ys, float))
        self.spec = spec
        self.q0 = spec.family.q0(ys)
        _check_finite(self.q0, ys, "q0")
        L = spec.family.L
        self.basis = np.zeros((L, ys.shape[0], spec.dims.d, spec.dims.k))
        for l, field_ in enumerate(spec.family.mu_basis):
            self.basis[l] = field_(ys)
        _check_finite(self.basis.reshape(L * ys.shape[0], -1) if L else np.zeros(0),
                      np.repeat(ys, max(L, 1), axis=0), "drift basis")

    def offdiag(self, theta):
        return self.q0 * _phi(self.spec, theta)

    def Q(self, theta):
        return assemble_generator(self.offdiag(theta))

    def C(self, theta):
        if self.basis.shape[0] == 0:
            return np.zeros(self.basis.shape[1:])
        psi = np.asarray(self.spec.family.psi(theta), float)
        return np.tensordot(psi, self.basis, axes=1)


@dataclass
class Violation:
    kind: str
    detail: str
    point: list


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self):
        return not self.violations


def validate_model(spec: ModelSpec, sample_grid, theta_probe) -> ValidationReport:
    """Check nonnegativity, declared bounds and multiplier positivity by sampling."""
    ys = np.atleast_2d(np.asarray(sample_grid, float))
    probes = np.atleast_2d(np.asarray(theta_probe, float))
    if ys.size == 0 or probes.size == 0:
        raise ValidationError("validation grids must be nonempty")
    out = []
    k = spec.dims.k
    off = np.eye(k, dtype=bool) == False  # noqa: E712
    q0 = spec.family.q0(ys)
    for n, y in enumerate(ys):
        vals = q0[n][off]
        if not np.all(np.isfinite(vals)):
            out.append(Violation("non-finite rate", "q0", y.tolist()))
            continue
        if np.any(vals < 0):
            j, i = np.argwhere((q0[n] < 0) & off)[0]
            out.append(Violation("negative rate", f"q0[{j},{i}]={q0[n][j, i]:.6g}", y.tolist()))
        if np.any(vals > spec.family.q0.bound):
            out.append(Violation("rate bound", f"max rate {vals.max():.6g} > "
                                 f"{spec.family.q0.bound:.6g}", y.tolist()))
    for l, field_ in enumerate(spec.family.mu_basis):
        norms = np.linalg.norm(field_(ys), axis=1)
        for n in np.flatnonzero(~(norms <= field_.bound)):
            out.append(Violation("drift bound", f"basis {l}: |mu|={norms[n].max():.6g} > "
                                 f"{field_.bound:.6g}", ys[n].tolist()))
    for theta in probes:
        phi = np.asarray(spec.family.phi(theta), float)
        bad = off & ~(phi > 0)
        if np.any(bad):
            j, i = np.argwhere(bad)[0]
            out.append(Violation("phi positivity", f"phi[{j},{i}]={phi[j, i]!r}", theta.tolist()))
    return ValidationReport(out)
