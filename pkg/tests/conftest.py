import numpy as np
import pytest

from hybridfilt.fields import ConstantDrift, ConstantRates
from hybridfilt.model import ExponentialFamily, ModelDims, ModelSpec, ParameterBox
from hybridfilt.scenarios import wonham


def symmetric_chain(k=2, rate=1.0, drift=None, epsilon=1.0, init=None):
    """k states, all off-diagonal base rates ``rate``, one shared rate multiplier."""
    base = np.full((k, k), rate)
    np.fill_diagonal(base, 0.0)
    q0 = ConstantRates(base)
    ri = np.zeros((k, k), dtype=int)
    if drift is None:
        fam = ExponentialFamily.canonical_family(q0, [], ri, [])
        dims, box = ModelDims(k, 1, 0, 1), ParameterBox([0.01], [50.0])
    else:
        fam = ExponentialFamily.canonical_family(q0, [ConstantDrift([drift])], ri, [1])
        dims, box = ModelDims(k, 1, 1, 2), ParameterBox([0.01, -10.0], [50.0, 10.0])
    init = np.full(k, 1.0 / k) if init is None else np.asarray(init, float)
    return ModelSpec(dims, fam, epsilon, init, np.zeros(1), box)


def single_state(drift=1.0, epsilon=0.5):
    """k = 1: Y is Brownian motion with constant drift ``psi * drift``."""
    q0 = ConstantRates([[0.0]], bound=0.0)
    fam = ExponentialFamily.canonical_family(q0, [ConstantDrift([[drift]])], [[-1]], [0])
    return ModelSpec(ModelDims(1, 1, 1, 1), fam, epsilon, np.ones(1), np.zeros(1),
                     ParameterBox([-10.0], [10.0]))


@pytest.fixture(scope="session")
def wonham_spec():
    return wonham()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
