from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from rjda import EncounterData, PriorOnN, RandomEffects

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Lines collected by the acceptance module, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def toy():
    """Three observed individuals over two occasions, capped at M=6."""
    data = EncounterData.from_histories([[1, 0], [1, 1], [0, 1]])
    return data, RandomEffects.beta(1.0, 1.0), PriorOnN.uniform(6)


def oracle_grid():
    """Small cases with tractable exact posteriors (M <= 8, k <= 3, fixed hyperparameters)."""
    return [
        ("toy-beta11", EncounterData.from_histories([[1, 0], [1, 1], [0, 1]]), RandomEffects.beta(1, 1), 6),
        ("k3-beta", EncounterData.from_frequencies([2, 1, 0]), RandomEffects.beta(0.5, 1.5), 8),
        ("k1-beta22", EncounterData.from_frequencies([2]), RandomEffects.beta(2, 2), 6),
        ("k2-logitnormal", EncounterData.from_frequencies([1, 1]), RandomEffects.logit_normal(0.0, 1.0), 7),
        ("k3-logitnormal", EncounterData.from_frequencies([3, 0, 1]), RandomEffects.logit_normal(-1.0, 0.5), 8),
        ("k3-logitnormal-tight", EncounterData.from_frequencies([1, 2, 0]), RandomEffects.logit_normal(0.5, 2.0), 8),
    ]
