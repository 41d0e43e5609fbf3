import numpy as np
import pytest

from onebitml.core import SystemConfig
from onebitml.learning import TrainConfig
from onebitml.snr import fit_snr_estimator, generate_snr_dataset

DEFAULT_MLP_GRID = tuple(float(v) for v in np.arange(-10.0, 30.0 + 1e-9, 2.0))


@pytest.fixture(scope="session")
def default_mlp():
    """MLP trained on the default grid (N_r=32, N_u=4, QPSK, N_tr=30, N=3)."""
    system = SystemConfig(32, 4, 4)
    train = TrainConfig(30, 3, 0.5)
    samples = generate_snr_dataset(system, train, DEFAULT_MLP_GRID, 500, np.random.default_rng(7))
    params = fit_snr_estimator(samples, train.subblock_length, epochs=150, seed=0)
    return system, train, params


ACCEPTANCE_LINES = []


def record_criterion(name, passed, detail):
    """Collect one acceptance verdict line for the terminal summary."""
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
