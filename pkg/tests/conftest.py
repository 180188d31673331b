import numpy as np
import pytest

from tripoisson.model_core import (Family, FixedValue, GammaPrior, ModelConfig, SurveyDataset,
                                   UniformPrior)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def capped_data():
    """One site, coverage 0.5, counts 6 and 9."""
    return SurveyDataset.from_arrays([[6, 9]], [0.5])


@pytest.fixture
def capped_config():
    return ModelConfig(Family.POISSON, FixedValue(3.0), FixedValue(4.0), FixedValue(2.0))


@pytest.fixture
def flat_config():
    flat = GammaPrior(0.01, 0.01)
    return ModelConfig(Family.POISSON, flat, GammaPrior(5.0, 1.0), UniformPrior(0.0, 112.0))


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for a numbered criterion; returns the verdict."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
