import numpy as np
import pytest

from dataconform.lqr_core import LqrWeights
from dataconform.simulator import (
    BENCHMARK_K0,
    ControlLaw,
    benchmark_plant,
    simulate,
)
from dataconform.sysid import LinearModel


@pytest.fixture(scope="session")
def benchmark_model():
    return LinearModel(
        A=[[0.98, 0.1], [0.0, 0.95]],
        B=[[0.0], [0.1]],
        W=np.diag([0.2, 0.1]),
    )


@pytest.fixture(scope="session")
def benchmark_weights():
    # identity-scale weights used throughout the unit tests; the campaign
    # defaults live in the bundled configs
    return LqrWeights(Q=np.eye(2), R=[[1.0]], V=[[0.5]])


@pytest.fixture(scope="session")
def excitation_law():
    return ControlLaw(K=BENCHMARK_K0, V=[[0.5]])


@pytest.fixture(scope="session")
def seeded_linear_run(excitation_law):
    """One fixed 2000-sample excitation experiment on the linear benchmark."""
    plant = benchmark_plant("linear")
    return simulate(plant, excitation_law, np.zeros(2), 2000, seed=20240101)


def rand_symmetric(rng, n, scale=1.0):
    m = rng.standard_normal((n, n)) * scale
    return 0.5 * (m + m.T)


def rand_pd(rng, n, shift=0.5):
    m = rng.standard_normal((n, n))
    return m @ m.T + shift * np.eye(n)


def rand_stable_closed_loop(rng, r_x=2, r_u=1):
    """Random model + gain with a Schur-stable closed loop and PD noise terms."""
    while True:
        a = rng.standard_normal((r_x, r_x)) * 0.6
        b = rng.standard_normal((r_x, r_u))
        k = rng.standard_normal((r_u, r_x)) * 0.3
        if np.max(np.abs(np.linalg.eigvals(a + b @ k))) < 0.95:
            w = rand_pd(rng, r_x, shift=0.3)
            return LinearModel(a, b, w), k
