from __future__ import annotations

import numpy as np
import pytest

from elrsel.data_io import Dataset


def random_dataset(n: int, p: int, seed: int, with_z: bool = False, noise: float = 0.3) -> Dataset:
    """Covariates uniform on [0, 1] with a smooth nonlinear mean."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    X[0], X[1] = 0.0, 1.0
    y = np.sin(2 * np.pi * X[:, 0]) + X[:, 1:].sum(axis=1) ** 2 + noise * rng.standard_normal(n)
    z = None
    if with_z:
        z = rng.uniform(size=n)
        z[0], z[1] = 0.0, 1.0
    return Dataset(y, X, z)


@pytest.fixture
def small_data():
    return random_dataset(120, 2, seed=11)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
