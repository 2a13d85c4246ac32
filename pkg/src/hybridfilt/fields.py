"""Rate and drift field families.

A rate field returns, for each point ``y``, a ``(k, k)`` array whose entry
``[j, i]`` is the rate of the transition ``i -> j``; diagonals are always
zero here and are filled in by :func:`hybridfilt.model.rate_matrices`.
A drift field returns a ``(d, k)`` array whose column ``i`` is the drift
vector in discrete state ``i``.

The built-in families (constant, affine, quadratic, tabulated) all reduce
to one coefficient layout, ``const + lin.y + y.quad.y + interp(table, y[0])``,
which the compiled simulator can evaluate without calling back into Python.
"""
from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

FAMILY_VERSION = 1


class FieldTables(NamedTuple):
    """Flattened coefficients of a built-in field (output flattened to ``P``)."""
    const: np.ndarray   # (P,)
    lin: np.ndarray     # (P, d)
    quad: np.ndarray    # (P, d, d)
    grid: np.ndarray    # (g,), empty when there is no table
    table: np.ndarray   # (g, P)


def _as_points(y, d):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(1, d)
    if y.ndim != 2 or y.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {y.shape}")
    return y


class _Field:
    kind = ""
    family = ""

    def __init__(self, out_shape, d, bound):
        self.out_shape = tuple(out_shape)
        self.d = int(d)
        self.bound = float(bound)

    def __call__(self, y):
        raise NotImplementedError

    def tables(self) -> FieldTables | None:
        return None

    def to_config(self) -> dict:
        raise TypeError(f"{type(self).__name__} cannot be serialized")


class _TabularPoly(_Field):
    """Shared evaluation for the built-in coefficient families."""

    def __init__(self, out_shape, d, bound, const=None, lin=None, quad=None,
                 grid=None, table=None):
        super().__init__(out_shape, d, bound)
        P = int(np.prod(self.out_shape))
        self._const = np.zeros(P) if const is None else np.asarray(const, float).reshape(P)
        self._lin = (np.zeros((P, d)) if lin is None
                     else np.asarray(lin, float).reshape(P, d))
        self._quad = (np.zeros((P, d, d)) if quad is None
                      else np.asarray(quad, float).reshape(P, d, d))
        if grid is None:
            self._grid = np.zeros(0)
            self._table = np.zeros((0, P))
        else:
            if d != 1:
                raise ValueError("tabulated fields require d == 1")
            self._grid = np.asarray(grid, float)
            self._table = np.asarray(table, float).reshape(len(self._grid), P)
            if self._grid.size < 2 or np.any(np.diff(self._grid) <= 0):
                raise ValueError("table grid must be strictly increasing with >= 2 points")

    def tables(self):
        return FieldTables(self._const, self._lin, self._quad, self._grid, self._table)

    def _eval_flat(self, y):
        y = _as_points(y, self.d)
        out = np.broadcast_to(self._const, (y.shape[0], self._const.size)).copy()
        if np.any(self._lin):
            out += y @ self._lin.T
        if np.any(self._quad):
            out += np.einsum("pab,na,nb->np", self._quad, y, y)
        if self._grid.size:
            x = y[:, 0]
            for p in range(self._const.size):
                out[:, p] += np.interp(x, self._grid, self._table[:, p])
        return out

    def __call__(self, y):
        flat = self._eval_flat(y)
        return flat.reshape((flat.shape[0],) + self.out_shape)


def _zero_diag(a):
    k = a.shape[-1]
    idx = np.arange(k)
    a[..., idx, idx] = 0.0
    return a


class RateField(_Field):
    """Base class for rate fields; subclasses implement ``__call__``."""
    kind = "rates"

    @property
    def k(self):
        return self.out_shape[0]

    def evaluate(self, i: int, j: int, y) -> float:
        """Rate of the jump ``i -> j`` at the single point ``y``."""
        if i == j:
            raise ValueError("evaluate() is defined for j != i only")
        return float(self(np.asarray(y, float).reshape(1, self.d))[0, j, i])


class DriftField(_Field):
    """Base class for drift fields; subclasses implement ``__call__``."""
    kind = "drift"

    @property
    def k(self):
        return self.out_shape[1]

    def evaluate(self, i: int, y) -> np.ndarray:
        """Drift vector in state ``i`` at the single point ``y``."""
        return self(np.asarray(y, float).reshape(1, self.d))[0, :, i].copy()


class _BuiltinRates(_TabularPoly, RateField):
    def __call__(self, y):
        return _zero_diag(_TabularPoly.__call__(self, y))

    def to_config(self):
        return {"family": self.family, "version": FAMILY_VERSION,
                "bound": self.bound, "d": self.d, "coefficients": self._coefficients()}


class _BuiltinDrift(_TabularPoly, DriftField):
    def to_config(self):
        return {"family": self.family, "version": FAMILY_VERSION,
                "bound": self.bound, "d": self.d, "coefficients": self._coefficients()}


class ConstantRates(_BuiltinRates):
    family = "constant"

    def __init__(self, rates, d=1, bound=None):
        rates = _zero_diag(np.array(rates, dtype=float))
        k = rates.shape[0]
        if bound is None:
            bound = float(np.max(np.abs(rates))) if rates.size else 0.0
        super().__init__((k, k), d, bound, const=rates)

    def _coefficients(self):
        return {"const": self._const.reshape(self.out_shape).tolist()}


class AffineRates(_BuiltinRates):
    """``q_{ji}(y) = const[j, i] + <lin[j, i], y>``."""
    family = "affine"

    def __init__(self, const, lin, bound):
        const = np.asarray(const, float)
        lin = np.asarray(lin, float)
        k, d = const.shape[0], lin.shape[-1]
        super().__init__((k, k), d, bound, const=const, lin=lin)

    def _coefficients(self):
        k = self.out_shape[0]
        return {"const": self._const.reshape(k, k).tolist(),
                "lin": self._lin.reshape(k, k, self.d).tolist()}


class QuadraticRates(_BuiltinRates):
    """``q_{ji}(y) = const + <lin, y> + y^T quad y`` per entry."""
    family = "quadratic"

    def __init__(self, const, lin, quad, bound):
        const = np.asarray(const, float)
        quad = np.asarray(quad, float)
        k, d = const.shape[0], quad.shape[-1]
        lin = np.zeros((k, k, d)) if lin is None else lin
        super().__init__((k, k), d, bound, const=const, lin=lin, quad=quad)

    def _coefficients(self):
        k = self.out_shape[0]
        return {"const": self._const.reshape(k, k).tolist(),
                "lin": self._lin.reshape(k, k, self.d).tolist(),
                "quad": self._quad.reshape(k, k, self.d, self.d).tolist()}


class TabulatedRates(_BuiltinRates):
    """Rates tabulated on a 1-d grid, linearly interpolated, constant outside."""
    family = "tabulated"

    def __init__(self, grid, table, bound=None):
        table = np.asarray(table, float)
        k = table.shape[1]
        if bound is None:
            bound = float(np.max(table))
        super().__init__((k, k), 1, bound, grid=grid, table=table)

    def _coefficients(self):
        k = self.out_shape[0]
        return {"grid": self._grid.tolist(),
                "table": self._table.reshape(-1, k, k).tolist()}


class ConstantDrift(_BuiltinDrift):
    family = "constant"

    def __init__(self, values, bound=None):
        values = np.atleast_2d(np.asarray(values, float))
        d, k = values.shape
        if bound is None:
            bound = float(np.max(np.linalg.norm(values, axis=0)))
        super().__init__((d, k), d, bound, const=values)

    def _coefficients(self):
        return {"const": self._const.reshape(self.out_shape).tolist()}


class AffineDrift(_BuiltinDrift):
    """``mu(i, y) = const[:, i] + lin[:, i, :] @ y``."""
    family = "affine"

    def __init__(self, const, lin, bound):
        const = np.atleast_2d(np.asarray(const, float))
        d, k = const.shape
        super().__init__((d, k), d, bound, const=const, lin=lin)

    def _coefficients(self):
        d, k = self.out_shape
        return {"const": self._const.reshape(d, k).tolist(),
                "lin": self._lin.reshape(d, k, d).tolist()}


class QuadraticDrift(_BuiltinDrift):
    family = "quadratic"

    def __init__(self, const, lin, quad, bound):
        const = np.atleast_2d(np.asarray(const, float))
        d, k = const.shape
        super().__init__((d, k), d, bound, const=const, lin=lin, quad=quad)

    def _coefficients(self):
        d, k = self.out_shape
        return {"const": self._const.reshape(d, k).tolist(),
                "lin": self._lin.reshape(d, k, d).tolist(),
                "quad": self._quad.reshape(d, k, d, d).tolist()}


class TabulatedDrift(_BuiltinDrift):
    """Drift tabulated on a 1-d grid; ``table`` has shape ``(g, 1, k)``."""
    family = "tabulated"

    def __init__(self, grid, table, bound=None):
        table = np.asarray(table, float)
        if table.ndim == 2:
            table = table[:, None, :]
        k = table.shape[2]
        if bound is None:
            bound = float(np.max(np.abs(table)))
        super().__init__((1, k), 1, bound, grid=grid, table=table)

    def _coefficients(self):
        k = self.out_shape[1]
        return {"grid": self._grid.tolist(),
                "table": self._table.reshape(-1, 1, k).tolist()}


class CallableRates(RateField):
    """Wrap a vectorized callable ``fn(y: (n, d)) -> (n, k, k)``."""
    family = "callable"

    def __init__(self, fn: Callable, k: int, d: int, bound: float):
        super().__init__((k, k), d, bound)
        self._fn = fn

    def __call__(self, y):
        y = _as_points(y, self.d)
        out = np.array(self._fn(y), dtype=float).reshape(y.shape[0], self.k, self.k)
        return _zero_diag(out)


class CallableDrift(DriftField):
    """Wrap a vectorized callable ``fn(y: (n, d)) -> (n, d, k)``."""
    family = "callable"

    def __init__(self, fn: Callable, k: int, d: int, bound: float):
        super().__init__((d, k), d, bound)
        self._fn = fn

    def __call__(self, y):
        y = _as_points(y, self.d)
        return np.array(self._fn(y), dtype=float).reshape(y.shape[0], self.d, self.k)


RATE_FAMILIES = {
    "constant": lambda c, b, d: ConstantRates(c["const"], d=d, bound=b),
    "affine": lambda c, b, d: AffineRates(c["const"], c["lin"], b),
    "quadratic": lambda c, b, d: QuadraticRates(c["const"], c.get("lin"), c["quad"], b),
    "tabulated": lambda c, b, d: TabulatedRates(c["grid"], c["table"], b),
}

DRIFT_FAMILIES = {
    "constant": lambda c, b, d: ConstantDrift(c["const"], b),
    "affine": lambda c, b, d: AffineDrift(c["const"], c["lin"], b),
    "quadratic": lambda c, b, d: QuadraticDrift(c["const"], c.get("lin"), c["quad"], b),
    "tabulated": lambda c, b, d: TabulatedDrift(c["grid"], c["table"], b),
}


def field_from_config(kind: str, cfg: dict, d: int):
    registry = RATE_FAMILIES if kind == "rates" else DRIFT_FAMILIES
    family = cfg.get("family")
    if family not in registry:
        raise KeyError(f"unknown {kind} family {family!r}")
    version = cfg.get("version", FAMILY_VERSION)
    if version != FAMILY_VERSION:
        raise ValueError(f"{kind} family {family!r}: unsupported version {version}")
    return registry[family](cfg["coefficients"], cfg.get("bound"), cfg.get("d", d))


def stack_tables(fields) -> tuple | None:
    """Pack built-in fields into padded arrays for the compiled simulator.

    Returns ``(const, lin, quad, grids, glen, tables)`` with a leading axis
    over fields, or ``None`` if any field lacks a coefficient form.
    """
    tabs = [f.tables() for f in fields]
    if any(t is None for t in tabs):
        return None
    n = len(tabs)
    P = tabs[0].const.size
    d = tabs[0].lin.shape[1]
    gmax = max([t.grid.size for t in tabs] + [1])
    const = np.zeros((n, P))
    lin = np.zeros((n, P, d))
    quad = np.zeros((n, P, d, d))
    grids = np.zeros((n, gmax))
    glen = np.zeros(n, dtype=np.int64)
    tables = np.zeros((n, gmax, P))
    for a, t in enumerate(tabs):
        const[a] = t.const
        lin[a] = t.lin
        quad[a] = t.quad
        g = t.grid.size
        glen[a] = g
        if g:
            grids[a, :g] = t.grid
            tables[a, :g] = t.table
    return const, lin, quad, grids, glen, tables
