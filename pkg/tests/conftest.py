import functools

import pytest

from oblate_crystal import DriveConfig, IonSpecies, TrapGeometry, build_dimensionless, solve_equilibrium
from oblate_crystal.modes import build_spring_matrices, solve_modes

REFERENCE_VOLTAGES = (46.3, 50.0, 50.0)
COUPLING_VOLTAGES = (94.9, 100.0, 100.0)

SPECIES = IonSpecies.ytterbium171()
GEOMETRY = TrapGeometry()
DRIVE = DriveConfig()


@functools.lru_cache(maxsize=None)
def trap_at(v_ring, v_top, v_bottom):
    return build_dimensionless(SPECIES, GEOMETRY, DRIVE.with_voltages(v_ring, v_top, v_bottom))


@functools.lru_cache(maxsize=None)
def crystal(n_ions, voltages=REFERENCE_VOLTAGES):
    """Newton equilibrium and spectrum, shared across test modules."""
    trap = trap_at(*voltages)
    state = solve_equilibrium(trap, n_ions)
    spectrum = solve_modes(build_spring_matrices(trap, state))
    return trap, state, spectrum


@pytest.fixture(scope="session")
def solved():
    return crystal


# --- acceptance reporting ----------------------------------------------------

_criteria: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        cid, title = marker.args
        entry = _criteria.setdefault(cid, {"title": title, "results": {}})
        entry["results"][item.name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria, key=lambda c: int(c[1:])):
        entry = _criteria[cid]
        results = entry["results"]
        failed = sorted(name for name, outcome in results.items() if outcome != "passed")
        verdict = "FAIL" if failed else "PASS"
        line = f"{cid} {verdict}: {entry['title']} ({len(results) - len(failed)}/{len(results)} checks)"
        if failed:
            line += " failing: " + ", ".join(failed)
        terminalreporter.write_line(line)
