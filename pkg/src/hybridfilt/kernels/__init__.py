"""Hot loops of the package, with a numba backend and a numpy fallback.

``get_backend("numba")`` / ``get_backend("numpy")`` return either module
explicitly (the benchmark and the agreement tests use this); the names
exported here follow ``HYBRIDFILT_NUMBA``.
"""
from .. import _accel
from . import _numba, _numpy

EULER = 0
EXACT = 1
SCHEMES = {"euler": EULER, "exact": EXACT}

BACKEND = "numba" if _accel.USE_NUMBA else "numpy"


def get_backend(name=None):
    name = name or BACKEND
    if name == "numba":
        return _numba
    if name == "numpy":
        return _numpy
    raise ValueError(f"unknown backend {name!r}")


def scheme_code(scheme):
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEMES)}") from None


_active = get_backend()
filter_kernel = _active.filter_kernel
estep_kernel = _active.estep_kernel
logmass_kernel = _active.logmass_kernel
mc_kernel = _active.mc_kernel
