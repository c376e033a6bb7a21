import numpy as np
import pytest

# One verdict line per acceptance criterion, printed after the run by the
# terminal-summary hook below so they survive output capture.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_line("")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

from cepnet.channel import MultipathConfig, build_dataset
from cepnet.manifold import MuiObjective
from cepnet.numerics import SeededRng, standard_complex_gaussian
from cepnet.solvers import initial_point


def random_instance(rng, nt=64, nu=16):
    """One random (H, s, x0) precoding instance with a Gaussian channel."""
    H = standard_complex_gaussian(rng, (nu, nt))
    s = standard_complex_gaussian(rng, nu)
    obj = MuiObjective(H=H, s=s)
    x0 = initial_point(obj)
    return obj, x0


@pytest.fixture(scope="session")
def small_multipath_splits():
    cfg = MultipathConfig(nt=64, nu=16)
    return build_dataset("multipath", (200, 100, 300), cfg, seed=11)
