import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rhl.dataio import ObservationWindow, build_counting_format

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def simulation_study(seed, **overrides):
    """Default-config study per seed, shared across test modules."""
    from rhl.simulate import SimulationConfig, run_simulation_study

    return run_simulation_study(SimulationConfig(seed=seed, **overrides))


@pytest.fixture(scope="session")
def study():
    return simulation_study


def random_counting_dataset(rng, n_units=6, p=2, max_events=6, n_clusters=2):
    """Small random dataset with ``p`` time-constant covariates and ``enum``."""
    times = {}
    covs = {f"x{k}": {} for k in range(p)}
    for u in range(n_units):
        key = (f"c{u % n_clusters}", f"u{u}")
        m = rng.integers(0, max_events + 1)
        # a coarse lattice produces tied event times across units
        t = np.unique(rng.integers(1, 40, size=m) / 40.0)
        times[key] = t
        for k in range(p):
            covs[f"x{k}"][key] = float(rng.normal())
    if not any(len(v) for v in times.values()):
        times[("c0", "u0")] = np.array([0.5])
    return build_counting_format(times, ObservationWindow(0.0, 1.0), covariates=covs)


@pytest.fixture
def five_units():
    """Null-model fixture: five units of one cluster observed on [0, 1].

    Events: two at 0.2, one at 0.4, two at 0.6 and one at 0.8, so the
    Nelson-Aalen jumps are 2/5, 1/5, 2/5 and 1/5.
    """
    times = {
        ("c", "u1"): [0.2],
        ("c", "u2"): [0.2, 0.6],
        ("c", "u3"): [0.4],
        ("c", "u4"): [],
        ("c", "u5"): [0.6, 0.8],
    }
    return build_counting_format(times, ObservationWindow(0.0, 1.0))


# --------------------------------------------------------------------------
# acceptance summary: one line per criterion

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        outcome, detail = _ACCEPTANCE[name]
        number = name.split("_")[2]
        label = " ".join(name.split("_")[3:])
        line = f"criterion {number} ({label}): {outcome}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
