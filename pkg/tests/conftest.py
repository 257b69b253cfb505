import warnings

import numpy as np
import pytest

from fkswitch.errors import ModelWarning
from fkswitch.model import DampeningSpec, PayoffSpec, build_model, validate_generator

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def two_regime_model():
    """Calm/turbulent pair used throughout: beta 0.8, sigma (0.2, 0.5), r (0.03, 0.06), q = (1, 2)."""
    return build_model(0.8, [0.2, 0.5], [0.03, 0.06], 1.0, validate_generator([[-1.0, 1.0], [2.0, -2.0]]))


def single_regime_model():
    return build_model(0.5, [0.2], [0.05], 1.0, validate_generator([[0.0]]))


def identical_pair_model(q: float = 2.0):
    gen = validate_generator([[-q, q], [q, -q]])
    return build_model(0.5, [0.2, 0.2], [0.05, 0.05], 1.0, gen)


def zero_rate_model(rates=((-1.0, 1.0), (2.0, -2.0)), sigma=None):
    gen = validate_generator(rates)
    m = gen.size
    sigma = [0.2] * m if sigma is None else sigma
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModelWarning)
        return build_model(0.5, sigma, [0.0] * m, 1.0, gen)


@pytest.fixture
def two_regime():
    return two_regime_model()


@pytest.fixture
def single_regime():
    return single_regime_model()


@pytest.fixture
def call():
    return PayoffSpec.call(1.0)


@pytest.fixture
def unit():
    return DampeningSpec.unit()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
