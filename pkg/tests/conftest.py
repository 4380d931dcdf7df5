import hypothesis
import numpy as np
import pytest

from riscal.channel import make_sounding_plan, path_gains
from riscal.scene import PlanarArray, RisState, Scenario, UserState, Waveform

hypothesis.settings.register_profile(
    "default", max_examples=30, deadline=None, suppress_health_check=[hypothesis.HealthCheck.too_slow]
)
hypothesis.settings.load_profile("default")


def small_scenario(user=(7.0, 4.0, -5.0), clock=5e-9, ris_side=6, bs_side=4, n_tx=8, n_sc=16):
    wf = Waveform(n_subcarriers=n_sc, n_transmissions=n_tx)
    return Scenario(
        waveform=wf,
        bs_array=PlanarArray(bs_side, bs_side),
        ris_array=PlanarArray(ris_side, ris_side),
        users=(UserState(np.array(user, float), clock),),
    )


def random_scene(rng, **kw):
    """A user and RIS pose drawn away from the arrays' planes."""
    user = np.array([rng.uniform(1.0, 9.0), rng.uniform(0.5, 8.5), rng.uniform(-6.0, -4.0)])
    sc = small_scenario(tuple(user), rng.uniform(-20e-9, 20e-9), **kw)
    ris = RisState(
        np.array([rng.uniform(3.0, 5.0), rng.uniform(9.5, 10.5), rng.uniform(-0.5, 0.5)]),
        np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), -np.pi / 2 + rng.uniform(-0.3, 0.3)]),
    )
    return Scenario(sc.waveform, sc.bs_array, sc.ris_array, sc.bs_position, ris, sc.users)


def plan_for(sc, seed=0, energy=1.0):
    wf = sc.waveform
    return make_sounding_plan(
        seed, wf.n_transmissions, sc.ris_array.n_elements, sc.bs_array.n_elements, wf.n_subcarriers, energy
    )


def gains_for(sc, seed=0):
    return path_gains(sc.bs_position, sc.ris.position, sc.users[0].position, sc.waveform.wavelength, seed)


@pytest.fixture
def scene():
    return small_scenario()


# --- acceptance summary: one pass/fail line per criterion -------------------

_criteria = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    entry = _criteria.setdefault(crit, {"passed": True, "details": []})
    if report.when == "call" or report.failed:
        entry["passed"] = entry["passed"] and report.passed
        detail = dict(report.user_properties).get("detail")
        if detail and report.when == "call":
            entry["details"].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_criteria, key=lambda c: int(c)):
        e = _criteria[crit]
        verdict = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {crit}: {verdict}  {'; '.join(e['details'])}")
