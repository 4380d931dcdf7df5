"""Experiment drivers: bound maps, RIS-size sweeps, Monte Carlo runs.

Every driver returns plain rows (lists of dicts) and derives all randomness
from the master seed plus a fixed stream label and an item index, so results
do not depend on the worker count.
"""

from __future__ import annotations

import math
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .channel import make_sounding_plan, noise_variance, pilot_energy
from .config import ScenarioConfig
from .estimator import (
    BlindSceneError,
    InitFailure,
    InitSearchConfig,
    estimate,
    initialize,
    multi_user_initialize,
    synthesize_measurement,
)
from .fim import (
    KNOWN_VARIANTS,
    Bounds,
    STATE_NAMES,
    extract_bounds,
    link_information,
    multi_user_state_fim,
    scaled_condition,
)
from .geometry import DegenerateGeometryError, wrap_angle
from .scene import Scenario, UserState, pack_state

# stream labels keep independent draws from colliding
PLAN, GAINS, NOISE, USERS = 0, 1, 2, 3


def rng_seed(master: int, stream: int, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=(stream, index))


def parallel_map(fn, items, workers: int = 1) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def sounding_plan(sc: Scenario, seed: int, energy: float | None = None):
    wf = sc.waveform
    return make_sounding_plan(
        rng_seed(seed, PLAN),
        wf.n_transmissions,
        sc.ris_array.n_elements,
        sc.bs_array.n_elements,
        wf.n_subcarriers,
        pilot_energy(wf) if energy is None else energy,
    )


def user_subcarriers(n_subcarriers: int, n_users: int, m: int, split: str = "interleaved") -> np.ndarray:
    """Subcarrier indices of user ``m`` under an equal OFDMA split."""
    if n_users > n_subcarriers:
        raise ValueError("more users than subcarriers")
    if split == "interleaved":
        return np.arange(m, n_subcarriers, n_users)
    edges = np.linspace(0, n_subcarriers, n_users + 1).round().astype(int)
    return np.arange(edges[m], edges[m + 1])


def known_indices(names) -> tuple[int, ...]:
    return tuple(STATE_NAMES.index(n) for n in names)


def bound_row(b) -> dict:
    return {
        "user_bound_m": float(b.user_position[0]),
        "ris_bound_m": b.ris_position,
        "orient_bound_deg": b.ris_yaw_deg,
        "clock_bound_ns": float(b.clock_offset_ns[0]),
        "singular": int(b.singular),
    }


def _blind_bounds(n_users=1):
    inf = np.full(n_users, math.inf)
    return Bounds(math.inf, math.inf, inf, inf.copy(), True)


def single_user_bounds(sc: Scenario, user: UserState, plan, known=(), gain_seed=0):
    """Bounds plus the scaled condition number; degenerate geometry counts as blind."""
    try:
        li = link_information(sc, user, plan, gain_seed=gain_seed)
    except DegenerateGeometryError:
        return _blind_bounds(), math.inf
    I_s = li.state_fim
    b = extract_bounds(I_s, known)
    if (li.nuisance_singular or li.geometry.gimbal) and not b.singular:
        b = _blind_bounds()
    free = np.setdiff1d(np.arange(I_s.shape[0]), known)
    return b, scaled_condition(I_s[np.ix_(free, free)])


# --- bounds map ------------------------------------------------------------

def _map_cell(args):
    cfg, x, y, n_tx, idx = args
    sc = cfg.scenario(n_transmissions=n_tx)
    plan = sounding_plan(sc, cfg.run.seed)
    user = UserState(np.array([x, y, cfg.map.height]), 0.0)
    b, cond = single_user_bounds(sc, user, plan, known_indices(cfg.run.known), rng_seed(cfg.run.seed, GAINS, idx))
    row = {"x": x, "y": y, **bound_row(b)}
    row["log10_cond"] = math.log10(cond) if np.isfinite(cond) else math.inf
    return row


def bounds_map(cfg: ScenarioConfig, nx=None, ny=None, full_fidelity=False) -> list[dict]:
    """Bounds over a grid of user positions at fixed height (cell centres)."""
    m = cfg.map
    nx, ny = nx or m.nx, ny or m.ny
    n_tx = cfg.waveform.n_transmissions if full_fidelity else m.reduced_transmissions
    xs = m.area_lo[0] + (np.arange(nx) + 0.5) * (m.area_hi[0] - m.area_lo[0]) / nx
    ys = m.area_lo[1] + (np.arange(ny) + 0.5) * (m.area_hi[1] - m.area_lo[1]) / ny
    jobs = [(cfg, float(x), float(y), n_tx, i * ny + j) for i, x in enumerate(xs) for j, y in enumerate(ys)]
    return parallel_map(_map_cell, jobs, cfg.run.workers)


# --- RIS size sweep --------------------------------------------------------

def bounds_vs_ris_size(cfg: ScenarioConfig, sizes=None, variants=None) -> list[dict]:
    """One row per (N_R, variant) for the first configured user."""
    sizes = sizes or cfg.sweep.ris_sizes
    variants = variants or cfg.sweep.variants
    u = cfg.users[0]
    user = UserState(np.array(u.position, float), u.clock_offset_ns * 1e-9)
    rows = []
    for n in sizes:
        side = math.isqrt(n)
        if side * side != n:
            raise ValueError(f"RIS size {n} is not a perfect square")
        sc = cfg.scenario(users=[user], ris_array=(side, side))
        plan = sounding_plan(sc, cfg.run.seed)
        li = link_information(sc, user, plan, gain_seed=rng_seed(cfg.run.seed, GAINS))
        I_s = li.state_fim
        for v in variants:
            b = extract_bounds(I_s, KNOWN_VARIANTS[v])
            rows.append({"n_ris": n, "variant": v, **bound_row(b)})
    return rows


# --- Monte Carlo over the number of users ----------------------------------

def mc_prior(cfg: ScenarioConfig) -> InitSearchConfig:
    """User prior box = the sampling area, thickened by 0.5 m vertically."""
    c, size = cfg.sweep.user_area_corner, cfg.sweep.user_area_size
    base = cfg.search()
    return InitSearchConfig(
        (c[0], c[1], c[2] - 0.5),
        (c[0] + size[0], c[1] + size[1], c[2] + 0.5),
        base.yaw_interval,
        base.distance_step,
        base.yaw_step,
        base.basin_threshold,
    )


def multi_user_links(cfg: ScenarioConfig, users, trial_seed):
    """Per-user link information under the OFDMA split, plus the shared scenario."""
    M = len(users)
    sc = cfg.scenario(users=users)
    wf = sc.waveform
    energy = pilot_energy(wf) * (M if cfg.ofdma.power_per_user else 1)
    plan = sounding_plan(sc, cfg.run.seed, energy)
    links = []
    for m, user in enumerate(users):
        ks = user_subcarriers(wf.n_subcarriers, M, m, cfg.ofdma.split)
        p = plan
        if cfg.ofdma.split_transmissions and M > 1:
            g = user_subcarriers(wf.n_transmissions, M, m, "block")
            p = type(plan)(plan.ris_profiles[g], plan.combiners[g], plan.pilots[g])
        gseed = rng_seed(trial_seed, GAINS, m)
        links.append(link_information(sc, user, p, sigma2=noise_variance(wf), subcarriers=ks, gain_seed=gseed))
    return sc, links


def sample_users(cfg: ScenarioConfig, M: int, seed) -> list[UserState]:
    c, size = cfg.sweep.user_area_corner, cfg.sweep.user_area_size
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, 1.0, size=(M, 2)) * np.asarray(size)
    beta = cfg.sweep.clock_offset_ns * 1e-9
    return [UserState(np.array([c[0] + a, c[1] + b, c[2]]), beta) for a, b in xy]


def _block_errors(s_hat, truth, M):
    dp_r = float(np.sum((s_hat[:3] - truth[:3]) ** 2))
    d_o = float(wrap_angle(s_hat[3] - truth[3]) ** 2)
    d_u = [float(np.sum((s_hat[4 + 4 * m : 7 + 4 * m] - truth[4 + 4 * m : 7 + 4 * m]) ** 2)) for m in range(M)]
    d_b = [float((s_hat[7 + 4 * m] - truth[7 + 4 * m]) ** 2) for m in range(M)]
    return dp_r, d_o, d_u, d_b


def _mc_trial(args):
    cfg, M, trial, zero_noise = args
    seed = cfg.run.seed
    users = sample_users(cfg, M, rng_seed(seed, USERS, M * 100003 + trial))
    trial_seed = int(rng_seed(seed, NOISE, M * 100003 + trial).generate_state(1)[0])
    sc, links = multi_user_links(cfg, users, trial_seed)
    I_s = multi_user_state_fim([l.efim for l in links], [l.jacobian for l in links])
    b = extract_bounds(I_s)
    out = {
        "bounds": (b.ris_position**2, b.ris_yaw**2, list(b.user_position**2), list(b.clock_offset**2)),
        "singular": bool(b.singular),
        "failed": False,
        "init_failed": False,
    }
    truth = pack_state(sc.ris, users)
    try:
        meas = [
            synthesize_measurement(l.geometry.eta, l.efim, rng_seed(trial_seed, NOISE, m), zero_noise)
            for m, l in enumerate(links)
        ]
    except BlindSceneError:
        out["failed"] = True
        return out
    prior = mc_prior(cfg)
    try:
        s0, _ = multi_user_initialize(meas, prior, sc.bs_position, sc.ris.orientation)
        res = estimate(meas, prior, sc.bs_position, sc.ris, cfg.run.max_iter)
    except InitFailure:
        out["failed"] = out["init_failed"] = True
        return out
    if not np.all(np.isfinite(s0)):
        out["init_failed"] = True
    else:
        out["init"] = _block_errors(s0, truth, M)
    if not (res.converged and np.all(np.isfinite(res.state))):
        out["failed"] = True
    else:
        out["gn"] = _block_errors(res.state, truth, M)
    return out


def _rms(values) -> float:
    values = [v for v in values if v is not None]
    if not values:
        return math.inf
    return math.sqrt(sum(values) / len(values))


def _summarise(M, outs, trials) -> dict:
    def pooled(key, i):
        acc = []
        for o in outs:
            if key not in o:
                continue
            v = o[key][i]
            acc.extend(v if isinstance(v, list) else [v])
        return _rms(acc)

    row = {"n_users": M, "trials": trials}
    names = (("ris_position", "m", 1.0), ("ris_yaw", "deg", math.degrees(1.0)), ("user_position", "m", 1.0), ("clock_offset", "ns", 1e9))
    finite = [o for o in outs if not o["singular"]]
    for i, (name, unit, scale) in enumerate(names):
        bvals = []
        for o in finite:
            v = o["bounds"][i]
            bvals.extend(v if isinstance(v, list) else [v])
        row[f"{name}_bound_{unit}"] = _rms(bvals) * scale
        row[f"{name}_rmse_{unit}"] = pooled("gn", i) * scale
        row[f"{name}_init_rmse_{unit}"] = pooled("init", i) * scale
    row["singular_count"] = sum(o["singular"] for o in outs)
    row["failure_count"] = sum(o["failed"] for o in outs)
    row["init_failure_count"] = sum(o["init_failed"] for o in outs)
    return row


def mc_sweep_users(cfg: ScenarioConfig, n_users=None, trials=None, zero_noise=None) -> list[dict]:
    """Monte Carlo bounds and estimator RMSE versus the number of users.

    Bounds are pooled as ``sqrt(mean(bound^2))`` over trials, the same pooling
    as the RMSE, so the two columns are directly comparable.
    """
    n_users = n_users or cfg.sweep.n_users
    trials = trials or cfg.run.trials
    zero_noise = cfg.run.zero_noise if zero_noise is None else zero_noise
    rows = []
    for M in n_users:
        outs = parallel_map(_mc_trial, [(cfg, M, t, zero_noise) for t in range(trials)], cfg.run.workers)
        rows.append(_summarise(M, outs, trials))
    return rows


# --- single-scene commands --------------------------------------------------

def scene_measurements(cfg: ScenarioConfig, zero_noise=False):
    """Links and measurements for the configured users (raises BlindSceneError)."""
    users = [UserState(np.array(u.position, float), u.clock_offset_ns * 1e-9) for u in cfg.users]
    seed = cfg.run.seed
    if len(users) == 1:
        sc = cfg.scenario(users=users)
        plan = sounding_plan(sc, seed)
        links = [link_information(sc, users[0], plan, gain_seed=rng_seed(seed, GAINS))]
    else:
        sc, links = multi_user_links(cfg, users, seed)
    for l in links:
        if l.nuisance_singular:
            raise BlindSceneError("gain block of the channel FIM is singular")
    meas = [synthesize_measurement(l.geometry.eta, l.efim, rng_seed(seed, NOISE, m), zero_noise) for m, l in enumerate(links)]
    return sc, links, meas


def estimate_scene(cfg: ScenarioConfig, zero_noise=False) -> dict:
    sc, links, meas = scene_measurements(cfg, zero_noise)
    res = estimate(meas, cfg.search(), sc.bs_position, sc.ris, cfg.run.max_iter)
    truth = pack_state(sc.ris, sc.users)
    M = len(sc.users)
    I_s = multi_user_state_fim([l.efim for l in links], [l.jacobian for l in links])
    b = extract_bounds(I_s, known_indices(cfg.run.known))

    def errs(s):
        if not np.all(np.isfinite(s)):
            return None
        dp_r, d_o, d_u, d_b = _block_errors(s, truth, M)
        return {
            "ris_position_m": math.sqrt(dp_r),
            "ris_yaw_deg": math.degrees(math.sqrt(d_o)),
            "user_position_m": [math.sqrt(v) for v in d_u],
            "clock_offset_ns": [math.sqrt(v) * 1e9 for v in d_b],
        }

    return {
        "state_names": _state_names(M),
        "truth": truth.tolist(),
        "initial_state": res.initial_state.tolist(),
        "refined_state": res.state.tolist(),
        "initial_errors": errs(res.initial_state),
        "errors": errs(res.state),
        "bounds": {
            "ris_position_m": b.ris_position,
            "ris_yaw_deg": b.ris_yaw_deg,
            "user_position_m": b.user_position.tolist(),
            "clock_offset_ns": b.clock_offset_ns.tolist(),
            "singular": b.singular,
        },
        "converged": res.converged,
        "iterations": res.iterations,
        "message": res.message,
        "ambiguous": res.ambiguous,
        "trace": [s.tolist() for s in res.trace],
    }


def _state_names(M):
    names = list(STATE_NAMES[:4])
    for m in range(M):
        names += [f"{n}_{m}" for n in STATE_NAMES[4:]]
    return names


def cost_surface_rows(cfg: ScenarioConfig, zero_noise=False):
    """Full Delta(d0, o3) grid for the first configured user, argmin flagged."""
    sc, links, meas = scene_measurements(replace(cfg, users=cfg.users[:1]), zero_noise)
    init = initialize(meas[0], cfg.search(), sc.bs_position, sc.ris.orientation)
    surf = init.surface
    i0, j0 = surf.argmin
    rows = []
    for i, d0 in enumerate(surf.distances):
        for j, o3 in enumerate(surf.yaws):
            rows.append(
                {
                    "d0_m": float(d0),
                    "o3_deg": math.degrees(o3),
                    "cost": float(surf.values[i, j]),
                    "argmin": int(i == i0 and j == j0),
                }
            )
    info = {
        "basins": surf.basins(cfg.prior.basin_threshold),
        "ambiguous": init.ambiguous,
        "d0_hat_m": float(surf.distances[i0]),
        "o3_hat_deg": math.degrees(surf.yaws[j0]),
        "d0_true_m": float(links[0].geometry.d_bu),
        "o3_true_deg": math.degrees(sc.ris.yaw),
    }
    return rows, info
