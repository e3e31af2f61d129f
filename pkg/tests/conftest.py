import time
from dataclasses import dataclass

import pytest

from bridgenav.benchmarks import corridor
from bridgenav.scenario_io import load_scenario, shipped_scenario
from bridgenav.sim import Scenario, SimResult, run_scenario


@dataclass
class BenchmarkRun:
    scenario: Scenario
    result: SimResult
    repeat: SimResult  # second run from a fresh load with the same seed
    wall_seconds: float


@pytest.fixture(scope="session")
def small_corridor():
    s = corridor(n_per_group=4)
    return s, run_scenario(s)


@pytest.fixture(scope="session")
def benchmark_runs():
    """Two independent runs of every shipped benchmark, keyed by scenario name."""
    out = {}
    for name in ("corridor", "duct3d"):
        s = load_scenario(shipped_scenario(name))
        t0 = time.perf_counter()
        first = run_scenario(s)
        wall = time.perf_counter() - t0
        out[name] = BenchmarkRun(s, first, run_scenario(load_scenario(shipped_scenario(name))), wall)
    return out


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion; lines are echoed now and in the run summary."""

    def report(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title} [{detail}]"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
