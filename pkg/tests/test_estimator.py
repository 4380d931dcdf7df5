import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riscal.estimator import (
    BlindSceneError,
    InitFailure,
    InitSearchConfig,
    Measurement,
    cost_surface,
    ellipsoid_ray_intersect,
    estimate,
    gauss_newton_refine,
    initialize,
    multi_user_initialize,
    ray_box_distance_range,
    sample_measurements,
    synthesize_measurement,
    state_errors,
)
from riscal.experiments import sounding_plan
from riscal.fim import link_information
from riscal.geometry import SPEED_OF_LIGHT
from riscal.scene import Scenario, UserState, pack_state

unit = st.floats(-1, 1, allow_nan=False)


def _table_link(user, clock=10e-9, seed=0):
    sc = Scenario(users=(UserState(np.array(user, float), clock),))
    li = link_information(sc, sc.users[0], sounding_plan(sc, seed))
    return sc, li


@pytest.fixture(scope="module")
def link_887():
    return _table_link([8.0, 8.0, -5.0])


# --- geometry helpers ------------------------------------------------------

def test_ellipsoid_worked_example():
    p = ellipsoid_ray_intersect([0, 0, 0], [2, 0, 0], 4.0, [0, 1, 0])
    np.testing.assert_allclose(p, [0, 1.5, 0])
    assert np.linalg.norm(p) + np.linalg.norm(p - [2, 0, 0]) == pytest.approx(4.0, abs=1e-12)


def test_ellipsoid_on_axis():
    pu = np.array([3.0, 0.0, 0.0])
    p = ellipsoid_ray_intersect([0, 0, 0], pu, 2 * 3.0, [1, 0, 0])
    assert np.linalg.norm(p) == pytest.approx(1.5 * 3.0)


def test_ellipsoid_degenerate_is_skipped():
    assert ellipsoid_ray_intersect([0, 0, 0], [2, 0, 0], 2.0, [0, 1, 0]) is None


@given(st.tuples(unit, unit, unit), st.tuples(unit, unit, unit), st.floats(0.01, 5))
def test_ellipsoid_focal_sum(pu, u, extra):
    pu, u = 5 * np.array(pu), np.array(u)
    if np.linalg.norm(u) < 0.1:
        return
    u /= np.linalg.norm(u)
    d_r = np.linalg.norm(pu) + extra
    p = ellipsoid_ray_intersect(np.zeros(3), pu, d_r, u)
    assert p is not None
    assert np.linalg.norm(p) + np.linalg.norm(p - pu) == pytest.approx(d_r, abs=1e-9)


def test_ray_box_contains_true_distance():
    lo, hi = (6.5, 5.5, -5.5), (9.5, 8.5, -4.5)
    target = np.array([8.0, 7.0, -5.0])
    u = target / np.linalg.norm(target)
    d0, d1 = ray_box_distance_range([0, 0, 0], u, lo, hi)
    assert d0 < np.linalg.norm(target) < d1
    # independent check: entry and exit points sit on the box surface
    for d in (d0, d1):
        p = d * u
        assert np.all(p >= np.array(lo) - 1e-9) and np.all(p <= np.array(hi) + 1e-9)


def test_ray_box_misses():
    with pytest.raises(InitFailure):
        ray_box_distance_range([0, 0, 0], [-1, 0, 0], (1, 1, 1), (2, 2, 2))


def test_ray_box_origin_inside():
    assert ray_box_distance_range([0, 0, 0], [0, 0, 1], (-1, -1, -1), (1, 1, 1))[0] == 0.0


def test_search_config_validation():
    with pytest.raises(ValueError):
        InitSearchConfig(distance_step=0.0)
    with pytest.raises(ValueError):
        InitSearchConfig(yaw_interval=(1.0, 0.0))


# --- measurement synthesis -------------------------------------------------

def test_zero_noise_measurement(link_887):
    _, li = link_887
    m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
    np.testing.assert_array_equal(m.eta, li.geometry.eta)


def test_measurement_seed_determinism(link_887):
    _, li = link_887
    a = synthesize_measurement(li.geometry.eta, li.efim, seed=7)
    b = synthesize_measurement(li.geometry.eta, li.efim, seed=7)
    c = synthesize_measurement(li.geometry.eta, li.efim, seed=8)
    np.testing.assert_array_equal(a.eta, b.eta)
    assert not np.array_equal(a.eta, c.eta)


def test_measurement_covariance_is_inverse_efim(link_887):
    _, li = link_887
    m = synthesize_measurement(li.geometry.eta, li.efim, seed=0)
    s = 1 / np.sqrt(np.diag(m.covariance))
    prod = (m.covariance * np.outer(s, s)) @ (li.efim / np.outer(s, s))
    np.testing.assert_allclose(prod, np.eye(8), atol=1e-5)
    assert np.allclose(m.covariance, m.covariance.T, rtol=1e-12, atol=0)


def test_singular_efim_refuses_to_sample():
    with pytest.raises(BlindSceneError):
        synthesize_measurement(np.zeros(8), np.zeros((8, 8)))


def test_sample_correlations(link_887):
    _, li = link_887
    x = sample_measurements(li.geometry.eta, li.efim, 20000, seed=1)
    m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
    s = 1 / np.sqrt(np.diag(m.covariance))
    emp = np.cov(x.T) * np.outer(s, s)
    np.testing.assert_allclose(emp, m.covariance * np.outer(s, s), atol=0.05)


# --- initialisation ---------------------------------------------------------

def test_noiseless_init_within_one_step():
    sc, li = _table_link([9.0, 8.0, -5.0])
    m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
    cfg = InitSearchConfig()
    init = initialize(m, cfg, sc.bs_position, sc.ris.orientation)
    d0 = np.linalg.norm(init.state[4:7] - sc.bs_position)
    assert abs(d0 - li.geometry.d_bu) <= cfg.distance_step + 1e-9
    assert abs(init.state[3] - sc.ris.yaw) <= cfg.yaw_step + 1e-9
    # the closed-form chain is consistent: clock from the direct delay
    assert init.state[7] == pytest.approx(m.eta[6] - d0 / SPEED_OF_LIGHT)


def test_all_infeasible_grid_raises():
    # a measured RIS delay shorter than the direct one leaves no ellipsoid
    eta = np.array([0.7, -0.4, 1.19, 0.0, 0.3, -0.2, 40e-9, 30e-9])
    m = Measurement(eta, np.eye(8), np.eye(8))
    with pytest.raises(InitFailure):
        cost_surface(m, InitSearchConfig(), np.zeros(3))


def test_surface_shape_and_argmin():
    sc, li = _table_link([7.0, 3.0, -5.0])
    m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
    cfg = InitSearchConfig()
    surf = cost_surface(m, cfg, sc.bs_position, sc.ris.orientation)
    assert surf.values.shape == (surf.distances.size, surf.yaws.size)
    assert surf.yaws.size == round(40 / 0.1) + 1
    i, j = surf.argmin
    assert surf.values[i, j] == surf.values.min()
    # truth rounded to the grid is the global grid minimum (up to the grid offset)
    i_true = np.argmin(abs(surf.distances - li.geometry.d_bu))
    j_true = np.argmin(abs(surf.yaws - sc.ris.yaw))
    assert abs(i - i_true) <= 1 and abs(j - j_true) <= 1


def test_basin_counting_on_synthetic_surface():
    from riscal.estimator import CostSurface

    v = np.ones((20, 30))
    v[3:5, 4:7] = 0.0
    v[12:15, 20:25] = 0.01
    surf = CostSurface(np.arange(20.0), np.arange(30.0), v, np.zeros((20, 3)))
    assert surf.basins(0.05) == 2
    assert surf.basins(0.001) == 1


def test_multi_user_init_single_and_duplicate():
    sc, li = _table_link([7.0, 3.0, -5.0])
    m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
    cfg = InitSearchConfig()
    single = initialize(m, cfg, sc.bs_position, sc.ris.orientation).state
    s1, _ = multi_user_initialize([m], cfg, sc.bs_position, sc.ris.orientation)
    np.testing.assert_allclose(s1, single)
    s2, _ = multi_user_initialize([m, m], cfg, sc.bs_position, sc.ris.orientation)
    np.testing.assert_allclose(s2[:4], single[:4])


# --- Gauss-Newton -----------------------------------------------------------

def test_gn_fixed_point_at_truth(link_887):
    sc, li = link_887
    m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
    truth = pack_state(sc.ris, sc.users)
    res = gauss_newton_refine(m, truth, sc.bs_position, sc.ris)
    assert res.converged and res.iterations == 1
    assert np.linalg.norm(res.state - truth) < 1e-12


def test_gn_converges_from_grid_start():
    sc, li = _table_link([7.0, 3.0, -5.0], clock=-4e-9)
    m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
    res = estimate(m, InitSearchConfig(), sc.bs_position, sc.ris)
    err = state_errors(res.state, pack_state(sc.ris, sc.users))
    assert res.converged
    assert err["ris_position"] < 1e-6 and err["user_position"][0] < 1e-6
    assert err["ris_yaw"] < 1e-6 and err["clock_offset"][0] * SPEED_OF_LIGHT < 1e-6


def test_gn_weighted_cost_non_increasing():
    sc, li = _table_link([7.5, 4.0, -5.0])
    m = synthesize_measurement(li.geometry.eta, li.efim, seed=5)
    res = estimate(m, InitSearchConfig(), sc.bs_position, sc.ris)
    from riscal.estimator import _cost, _residuals

    costs = [_cost(_residuals(s, [m], sc.bs_position, sc.ris)[0], [m]) for s in res.trace]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(costs, costs[1:]))


def test_gn_rejects_bad_state_length(link_887):
    sc, li = link_887
    m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
    with pytest.raises(ValueError):
        gauss_newton_refine(m, np.zeros(12), sc.bs_position, sc.ris)


def test_gn_reports_non_finite_start(link_887):
    sc, li = link_887
    m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
    res = gauss_newton_refine(m, np.full(8, np.nan), sc.bs_position, sc.ris)
    assert not res.converged


def test_multi_user_noiseless_recovery():
    users = [UserState(np.array(p), b) for p, b in (([7.0, 3.0, -5.0], 2e-9), ([6.0, 7.0, -5.0], -3e-9))]
    sc = Scenario(users=tuple(users))
    plan = sounding_plan(sc, 0)
    meas = []
    for u in users:
        li = link_information(sc, u, plan)
        meas.append(synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True))
    res = estimate(meas, InitSearchConfig(), sc.bs_position, sc.ris)
    truth = pack_state(sc.ris, users)
    assert res.converged
    assert np.max(np.abs(res.state - truth)[[0, 1, 2, 3, 4, 5, 6, 8, 9, 10]]) < 1e-6


def test_published_cost_surface_topology():
    cfg = InitSearchConfig()
    counts = {}
    for user in ([5.0, 6.0, -5.0], [9.0, 8.0, -5.0]):
        sc, li = _table_link(user)
        m = synthesize_measurement(li.geometry.eta, li.efim, zero_noise=True)
        counts[tuple(user)] = cost_surface(m, cfg, sc.bs_position, sc.ris.orientation).basins(cfg.basin_threshold)
    assert counts[(9.0, 8.0, -5.0)] == 1
    assert counts[(5.0, 6.0, -5.0)] >= 2


def test_yaw_reported_inside_prior():
    sc, li = _table_link([7.0, 3.0, -5.0])
    m = synthesize_measurement(li.geometry.eta, li.efim, seed=2)
    cfg = InitSearchConfig()
    res = estimate(m, cfg, sc.bs_position, sc.ris)
    assert abs(res.state[3] - cfg.yaw_center) <= math.pi
