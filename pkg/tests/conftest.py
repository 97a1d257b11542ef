"""Session-scoped fixtures for the expensive shared computations."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pathkf import (
    BirthDeathScenario,
    ModelKind,
    run_benchmark,
    run_pkf,
    simulate_birth_death,
    table_specs,
)


@pytest.fixture(scope="session")
def benchmark_scenario():
    return BirthDeathScenario()


@pytest.fixture(scope="session")
def benchmark_data(benchmark_scenario):
    return simulate_birth_death(benchmark_scenario)


@pytest.fixture(scope="session")
def pkf_history_50(benchmark_data):
    """Fifty iterations with full history on the default scenario."""
    _, data = benchmark_data
    return run_pkf(data, ModelKind.BIRTH_DEATH, iterations=50, retain_history=True)


@pytest.fixture(scope="session")
def pkf_converged(benchmark_data):
    """A long run used for fixed-point and change-point assertions."""
    _, data = benchmark_data
    return run_pkf(data, ModelKind.BIRTH_DEATH, iterations=1000)


@pytest.fixture(scope="session")
def benchmark_report(benchmark_scenario):
    """All method-comparison rows on the shared synthetic dataset."""
    return run_benchmark(benchmark_scenario, table_specs())
