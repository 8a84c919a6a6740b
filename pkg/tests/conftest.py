import os
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from swiptcap.cli import load_scenario  # noqa: E402
from swiptcap.region import SweepSpec, capacity_vs_ap, rate_energy_region  # noqa: E402

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "swiptcap" / "scenarios"

# criterion number -> (verdict, detail), filled by test_acceptance
ACCEPTANCE = {}
# fixture name -> wall-clock seconds spent building it
TIMINGS = {}


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIOS


@pytest.fixture(scope="session")
def default_region():
    """Warm-started default region sweep, one list of points per peak amplitude."""
    scen = load_scenario(SCENARIOS / "region_default.yaml")
    out = {}
    for base in scen.specs():
        start = time.perf_counter()
        sweep = SweepSpec(base, "p_req", scen.p_req, tol=scen.tol)
        out[base.a] = (base, rate_energy_region(sweep))
        TIMINGS[f"default_region_a{base.a:g}"] = time.perf_counter() - start
    return out


@pytest.fixture(scope="session")
def strong_eh_curve():
    """Capacity against AP for the strong-coupling variant, with all baselines."""
    scen = load_scenario(SCENARIOS / "strong_eh_ap.yaml")
    (base,) = scen.specs()
    start = time.perf_counter()
    sweep = SweepSpec(base, "sigma_x2", scen.sweep_sigma_x2, shannon=scen.shannon, smith=scen.smith,
                      ask_sizes=scen.ask_sizes, tol=scen.tol)
    points = capacity_vs_ap(sweep)
    TIMINGS["strong_eh_curve"] = time.perf_counter() - start
    return points


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {detail}")
