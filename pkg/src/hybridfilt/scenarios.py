"""Reference models used by the verification command and the test-suite."""
from __future__ import annotations

import numpy as np

from .fields import AffineDrift, ConstantDrift, ConstantRates, QuadraticRates
from .model import ExponentialFamily, ModelDims, ModelSpec, ParameterBox


def wonham(epsilon=0.3, init=(0.5, 0.5), rate_bounds=(0.05, 20.0), drift_bounds=(-5.0, 5.0)):
    """Two states, constant unit base rates, drifts ``+psi`` / ``-psi`` in one dimension.

    theta = (phi_21, phi_12, psi): rate 1->2, rate 2->1, drift amplitude.
    """
    q0 = ConstantRates([[0.0, 1.0], [1.0, 0.0]])
    basis = ConstantDrift([[1.0, -1.0]])
    fam = ExponentialFamily.canonical_family(q0, [basis], [[-1, 1], [0, -1]], [2])
    box = ParameterBox([rate_bounds[0], rate_bounds[0], drift_bounds[0]],
                       [rate_bounds[1], rate_bounds[1], drift_bounds[1]])
    return ModelSpec(ModelDims(2, 1, 1, 3), fam, epsilon, np.array(init), np.zeros(1), box)


def wonham_split(epsilon=0.3, init=(0.5, 0.5)):
    """Same law as :func:`wonham` at ``psi = (1, -1)`` but with one drift basis
    field per state, so every drift statistic depends on the hidden path.

    theta = (phi_21, phi_12, psi_1, psi_2).
    """
    q0 = ConstantRates([[0.0, 1.0], [1.0, 0.0]])
    fam = ExponentialFamily.canonical_family(
        q0, [ConstantDrift([[1.0, 0.0]]), ConstantDrift([[0.0, 1.0]])], [[-1, 1], [0, -1]], [2, 3])
    box = ParameterBox([0.05, 0.05, -5.0, -5.0], [20.0, 20.0, 5.0, 5.0])
    return ModelSpec(ModelDims(2, 1, 2, 4), fam, epsilon, np.array(init), np.zeros(1), box)


def state_dependent(epsilon=0.5, init=(0.5, 0.5)):
    """Two states with ``q0_21(y) = 1 + y^2``, ``q0_12 = 1``; state 1 drifts
    as ``psi_1 (1 - y)`` and state 2 as ``psi_2 (-1 - y)``.

    The reversion keeps ``Y`` near ``[-1, 1]``, hence the rates bounded in
    practice; the declared bound 26 corresponds to ``|y| <= 5``.
    theta = (phi_21, phi_12, psi_1, psi_2).
    """
    q0 = QuadraticRates(const=[[0.0, 1.0], [1.0, 0.0]], lin=None,
                        quad=np.array([[[[0.0]], [[0.0]]], [[[1.0]], [[0.0]]]]), bound=26.0)
    up = AffineDrift([[1.0, 0.0]], np.array([[[-1.0], [0.0]]]), bound=6.0)
    down = AffineDrift([[0.0, -1.0]], np.array([[[0.0], [-1.0]]]), bound=6.0)
    fam = ExponentialFamily.canonical_family(q0, [up, down], [[-1, 1], [0, -1]], [2, 3])
    box = ParameterBox([0.05, 0.05, 0.0, 0.0], [20.0, 20.0, 10.0, 10.0])
    return ModelSpec(ModelDims(2, 1, 2, 4), fam, epsilon, np.array(init), np.zeros(1), box)


WONHAM_THETA = np.array([1.0, 1.0, 1.0])
WONHAM_SPLIT_THETA = np.array([1.0, 1.0, 1.0, -1.0])
STATE_DEP_THETA = np.array([1.0, 1.0, 1.0, 1.0])

SCENARIOS = {
    "wonham": (wonham, WONHAM_THETA),
    "wonham_split": (wonham_split, WONHAM_SPLIT_THETA),
    "state_dependent": (state_dependent, STATE_DEP_THETA),
}
