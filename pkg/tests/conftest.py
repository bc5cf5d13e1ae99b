import warnings

import numpy as np
import pytest

from icr.core import SummaryPacket
from icr.local import ConvergenceWarning


def random_packets(rng, K=3, p=4, n_range=(20, 60)):
    """Packets with random positive-definite Hessians and arbitrary vectors."""
    out = []
    for k in range(K):
        B = rng.standard_normal((p + 3, p))
        V = B.T @ B / (p + 3) + 0.1 * np.eye(p)
        out.append(SummaryPacket(str(k), int(rng.integers(*n_range)), rng.standard_normal(p),
                                 0.1 * rng.standard_normal(p), V))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _quiet_convergence():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        yield
