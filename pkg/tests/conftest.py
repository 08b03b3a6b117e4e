"""Shared fixtures: cached small systems, hypothesis profile, acceptance summary."""
from __future__ import annotations

import functools

import pytest
from hypothesis import HealthCheck, settings

from mixdim import benchmark, solvers
from mixdim.system import assemble

settings.register_profile(
    "mixdim", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("mixdim")

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def benchmark_system(kind: str, level: int):
    """Assembled benchmark system, cached for the session (small levels only)."""
    return assemble(benchmark.benchmark_spec(kind, level))


@functools.lru_cache(maxsize=None)
def direct_solution(kind: str, level: int):
    return solvers.solve_direct(benchmark_system(kind, level))


@pytest.fixture
def system_factory():
    return benchmark_system


@pytest.fixture
def solution_factory():
    return direct_solution


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
