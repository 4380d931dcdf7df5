"""Measurement synthesis, grid-search initialisation and Gauss-Newton refinement.

Measurements are the 8 geometric channel parameters drawn from a Gaussian
whose covariance is the inverse effective FIM. The initialiser scans the
BS-user distance ``d0`` and the RIS yaw ``o3``; every other state follows in
closed form, and the residual on the RIS intermediate angles is the cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fim import N_GEOM, _jacobi, is_singular, scaled_inverse, state_jacobian
from .geometry import (
    SPEED_OF_LIGHT,
    local_direction_from_angles,
    rot_x,
    rot_y,
    wrap_angle,
)
from .scene import RisState, link_geometry, unpack_state

ANGLE_ROWS = slice(0, 4)


class BlindSceneError(RuntimeError):
    """The effective FIM is singular, so no measurement can be drawn."""


class InitFailure(RuntimeError):
    """No feasible candidate in the initialisation grid."""


@dataclass(frozen=True)
class Measurement:
    eta: np.ndarray  # 8 measured geometric parameters
    covariance: np.ndarray  # 8x8, inverse of ``weight``
    weight: np.ndarray  # 8x8 EFIM the draw was generated from

    def __post_init__(self):
        if self.eta.shape != (N_GEOM,) or self.weight.shape != (N_GEOM, N_GEOM):
            raise ValueError("measurement must carry 8 parameters and an 8x8 EFIM")


def _covariance_factor(efim: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cov = scaled_inverse(efim)
    s = 1.0 / _jacobi(cov)
    cs = cov / np.outer(s, s)
    try:
        L = np.linalg.cholesky(cs)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (cs + cs.T))
        L = V * np.sqrt(np.clip(w, 0.0, None))
    return cov, L * s[:, None]


def synthesize_measurement(eta_true, efim: np.ndarray, seed=None, zero_noise: bool = False) -> Measurement:
    """Draw ``eta_hat ~ N(eta_true, efim^-1)``."""
    eta_true = np.asarray(eta_true, dtype=float)[:N_GEOM]
    if is_singular(efim):
        raise BlindSceneError("effective FIM is singular; scene is blind")
    cov, L = _covariance_factor(efim)
    if zero_noise:
        eta = eta_true.copy()
    else:
        eta = eta_true + L @ np.random.default_rng(seed).standard_normal(N_GEOM)
    return Measurement(eta, cov, efim.copy())


def sample_measurements(eta_true, efim: np.ndarray, n: int, seed=None) -> np.ndarray:
    """``n`` draws at once, shape (n, 8)."""
    if is_singular(efim):
        raise BlindSceneError("effective FIM is singular; scene is blind")
    _, L = _covariance_factor(efim)
    z = np.random.default_rng(seed).standard_normal((n, N_GEOM))
    return np.asarray(eta_true, dtype=float)[:N_GEOM] + z @ L.T


@dataclass(frozen=True)
class InitSearchConfig:
    box_lo: tuple[float, float, float] = (0.0, 0.0, -5.5)
    box_hi: tuple[float, float, float] = (10.0, 10.0, -4.5)
    yaw_interval: tuple[float, float] = (math.radians(-110.0), math.radians(-70.0))
    distance_step: float = 0.1
    yaw_step: float = math.radians(0.1)
    basin_threshold: float = 0.05

    def __post_init__(self):
        if self.distance_step <= 0 or self.yaw_step <= 0:
            raise ValueError("grid steps must be positive")
        if any(h < l for l, h in zip(self.box_lo, self.box_hi)) or self.yaw_interval[1] < self.yaw_interval[0]:
            raise ValueError("prior box and yaw interval must be non-empty")

    @property
    def yaw_center(self) -> float:
        return 0.5 * (self.yaw_interval[0] + self.yaw_interval[1])


def ray_box_distance_range(origin, direction, lo, hi) -> tuple[float, float]:
    """Parameter interval over which ``origin + d * direction`` lies in the box.

    Slab method; ``d`` is clipped at 0 so only the forward ray counts.
    """
    o = np.asarray(origin, dtype=float)
    u = np.asarray(direction, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    t0, t1 = 0.0, np.inf
    for i in range(3):
        if abs(u[i]) < 1e-15:
            if o[i] < lo[i] or o[i] > hi[i]:
                raise InitFailure("ray parallel to a slab and outside it")
            continue
        a, b = (lo[i] - o[i]) / u[i], (hi[i] - o[i]) / u[i]
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
    if t0 > t1:
        raise InitFailure("ray misses the user prior box")
    return float(t0), float(t1)


def ellipsoid_ray_intersect(p_b, p_u, focal_sum: float, u):
    """Point on the ray ``p_b + r u`` whose distances to ``p_b`` and ``p_u`` sum to ``focal_sum``.

    Returns None when there is no intersection in front of ``p_b``.
    """
    p_b = np.asarray(p_b, dtype=float)
    q = p_b - np.asarray(p_u, dtype=float)
    u = np.asarray(u, dtype=float)
    den = 2.0 * (focal_sum + q @ u)
    num = focal_sum**2 - q @ q
    if den <= 0 or num <= 0:
        return None
    return p_b + (num / den) * u


@dataclass
class CostSurface:
    distances: np.ndarray  # (n_d,)
    yaws: np.ndarray  # (n_o,)
    values: np.ndarray  # (n_d, n_o); +inf where infeasible
    ris_positions: np.ndarray  # (n_d, 3); nan where infeasible

    @property
    def argmin(self) -> tuple[int, int]:
        i, j = np.unravel_index(np.argmin(self.values), self.values.shape)
        return int(i), int(j)

    @property
    def minimum(self) -> float:
        return float(self.values[self.argmin])

    def basins(self, threshold: float) -> int:
        """Number of connected regions with cost below ``minimum + threshold``."""
        mask = self.values <= self.minimum + threshold
        _, n = ndimage.label(mask, structure=np.ones((3, 3)))
        return int(n)


@dataclass
class InitResult:
    state: np.ndarray  # single-user layout
    surface: CostSurface
    ambiguous: bool


def _yaw_rotations(orientation, yaws: np.ndarray) -> np.ndarray:
    base = rot_y(orientation[1]) @ rot_x(orientation[0])
    c, s = np.cos(yaws), np.sin(yaws)
    Rz = np.zeros((yaws.size, 3, 3))
    Rz[:, 0, 0], Rz[:, 0, 1], Rz[:, 1, 0], Rz[:, 1, 1], Rz[:, 2, 2] = c, -s, s, c, 1.0
    return Rz @ base


def cost_surface(meas: Measurement, cfg: InitSearchConfig, p_b, orientation=(0.0, 0.0, 0.0)) -> CostSurface:
    p_b = np.asarray(p_b, dtype=float)
    e = meas.eta
    t_bu = local_direction_from_angles(e[0:2])
    t_br = local_direction_from_angles(e[2:4])
    d_lo, d_hi = ray_box_distance_range(p_b, t_bu, cfg.box_lo, cfg.box_hi)
    n_d = int(np.floor((d_hi - d_lo) / cfg.distance_step + 1e-9)) + 1
    dists = d_lo + cfg.distance_step * np.arange(n_d)
    n_o = int(np.floor((cfg.yaw_interval[1] - cfg.yaw_interval[0]) / cfg.yaw_step + 1e-9)) + 1
    yaws = cfg.yaw_interval[0] + cfg.yaw_step * np.arange(n_o)

    sums = np.full((n_d, 3), np.nan)
    p_rs = np.full((n_d, 3), np.nan)
    for i, d0 in enumerate(dists):
        beta = e[6] - d0 / SPEED_OF_LIGHT
        p_u = p_b + t_bu * d0
        p_r = ellipsoid_ray_intersect(p_b, p_u, (e[7] - beta) * SPEED_OF_LIGHT, t_br)
        if p_r is None:
            continue
        d_rb = np.linalg.norm(p_b - p_r)
        d_ru = np.linalg.norm(p_u - p_r)
        if d_rb == 0 or d_ru == 0:
            continue
        sums[i] = (p_b - p_r) / d_rb + (p_u - p_r) / d_ru
        p_rs[i] = p_r
    if np.all(np.isnan(sums[:, 0])):
        raise InitFailure("no feasible candidate in the initialisation grid")

    R = _yaw_rotations(orientation, yaws)
    v = np.einsum("oji,dj->doi", R, sums)  # R^T s for every (d0, o3)
    cost = np.hypot(v[..., 1] - e[4], v[..., 2] - e[5])
    cost[np.isnan(cost)] = np.inf
    return CostSurface(dists, yaws, cost, p_rs)


def initialize(meas: Measurement, cfg: InitSearchConfig, p_b, orientation=(0.0, 0.0, 0.0)) -> InitResult:
    """Grid search over (d0, o3); returns the argmin state and the full surface."""
    p_b = np.asarray(p_b, dtype=float)
    surf = cost_surface(meas, cfg, p_b, orientation)
    i, j = surf.argmin
    d0 = surf.distances[i]
    t_bu = local_direction_from_angles(meas.eta[0:2])
    state = np.concatenate(
        [surf.ris_positions[i], [surf.yaws[j]], p_b + t_bu * d0, [meas.eta[6] - d0 / SPEED_OF_LIGHT]]
    )
    return InitResult(state, surf, surf.basins(cfg.basin_threshold) > 1)


def multi_user_initialize(measurements, cfg: InitSearchConfig, p_b, orientation=(0.0, 0.0, 0.0)):
    """Per-user searches fused into one state; RIS pose weighted by ``1/cost_min``.

    Users whose search fails are left out of the RIS average and keep a
    NaN block. Returns ``(state, per_user_results)``.
    """
    results = []
    for meas in measurements:
        try:
            results.append(initialize(meas, cfg, p_b, orientation))
        except InitFailure:
            results.append(None)
    ok = [r for r in results if r is not None]
    if not ok:
        raise InitFailure("initialisation failed for every user")
    w = np.array([1.0 / (r.surface.minimum + 1e-12) for r in ok])
    w /= w.sum()
    ris = sum(wi * r.state[:3] for wi, r in zip(w, ok))
    # yaws live on a circle; average their offsets from the first estimate
    y0 = ok[0].state[3]
    yaw = y0 + sum(wi * wrap_angle(r.state[3] - y0) for wi, r in zip(w, ok))
    parts = [ris, [yaw]]
    for r in results:
        parts.append(r.state[4:8] if r is not None else np.full(4, np.nan))
    return np.concatenate(parts), results


@dataclass
class EstimationResult:
    initial_state: np.ndarray
    state: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    message: str = ""
    surface: CostSurface | None = None
    ambiguous: bool = False


def _step_norm(ds: np.ndarray) -> float:
    scaled = ds.copy()
    scaled[7::4] *= SPEED_OF_LIGHT
    return float(np.linalg.norm(scaled))


def _residuals(state, measurements, p_b, template: RisState):
    ris, users = unpack_state(state, template)
    out = []
    for meas, user in zip(measurements, users):
        r = meas.eta - link_geometry(p_b, ris, user).eta
        r[ANGLE_ROWS] = wrap_angle(r[ANGLE_ROWS])
        out.append(r)
    return out, ris, users


def _cost(res, measurements) -> float:
    return float(sum(r @ m.weight @ r for r, m in zip(res, measurements)))


def _solve_damped(I: np.ndarray, g: np.ndarray, lam0=1e-6, max_escalations=8):
    lam = 0.0
    for _ in range(max_escalations + 1):
        A = I + lam * np.diag(np.diag(I))
        if not is_singular(A):
            s = _jacobi(A)
            return s * np.linalg.solve(A * np.outer(s, s), s * g)
        lam = lam0 if lam == 0.0 else lam * 10
    return None


def gauss_newton_refine(
    measurements,
    initial_state,
    p_b,
    ris_template: RisState,
    max_iter: int = 30,
    tol: float = 1e-9,
    yaw_center: float | None = None,
) -> EstimationResult:
    """Weighted Gauss-Newton on one or more users sharing the RIS.

    ``measurements`` is a Measurement or a list (one per user, in state
    order). Each user's residual is weighted by the EFIM it was drawn from.
    Steps that raise the weighted cost are halved up to 10 times.
    """
    if isinstance(measurements, Measurement):
        measurements = [measurements]
    p_b = np.asarray(p_b, dtype=float)
    s = np.asarray(initial_state, dtype=float).copy()
    n_users = len(measurements)
    if s.size != 4 + 4 * n_users:
        raise ValueError("state length does not match the number of measurements")
    result = EstimationResult(s.copy(), s.copy(), [s.copy()])
    if not np.all(np.isfinite(s)):
        result.message = "non-finite initial state"
        return result

    res, ris, users = _residuals(s, measurements, p_b, ris_template)
    cost = _cost(res, measurements)
    for it in range(1, max_iter + 1):
        n = s.size
        info = np.zeros((n, n))
        grad = np.zeros(n)
        for m, (meas, r, user) in enumerate(zip(measurements, res, users)):
            J = state_jacobian(p_b, ris, user)
            cols = np.r_[0:4, 4 + 4 * m : 8 + 4 * m]
            JW = J.T @ meas.weight
            info[np.ix_(cols, cols)] += JW @ J
            grad[cols] += JW @ r
        ds = _solve_damped(0.5 * (info + info.T), grad)
        result.iterations = it
        if ds is None:
            result.message = "information matrix singular after damping"
            return result
        step = 1.0
        for _ in range(11):
            trial = s + step * ds
            try:
                t_res, t_ris, t_users = _residuals(trial, measurements, p_b, ris_template)
                t_cost = _cost(t_res, measurements)
            except ValueError:
                t_cost = np.inf
            if t_cost <= cost:
                break
            step *= 0.5
        else:
            # no descent along the GN direction: already at a numerical minimum
            result.converged = True
            result.message = "no further decrease"
            break
        norm = _step_norm(step * ds)
        s, res, ris, users, cost = trial, t_res, t_ris, t_users, t_cost
        result.trace.append(s.copy())
        if norm < tol:
            result.converged = True
            result.message = "step below tolerance"
            break
    else:
        result.converged = bool(np.all(np.isfinite(s)))
        result.message = "iteration limit"

    if yaw_center is not None:
        s[3] = yaw_center + wrap_angle(s[3] - yaw_center)
    result.state = s
    return result


def estimate(
    measurements,
    cfg: InitSearchConfig,
    p_b,
    ris_template: RisState,
    max_iter: int = 30,
) -> EstimationResult:
    """Grid initialisation followed by Gauss-Newton refinement."""
    if isinstance(measurements, Measurement):
        measurements = [measurements]
    orient = ris_template.orientation
    if len(measurements) == 1:
        init = initialize(measurements[0], cfg, p_b, orient)
        s0, surface, amb = init.state, init.surface, init.ambiguous
    else:
        s0, per_user = multi_user_initialize(measurements, cfg, p_b, orient)
        surface = None
        amb = any(r is not None and r.ambiguous for r in per_user)
    result = gauss_newton_refine(measurements, s0, p_b, ris_template, max_iter, yaw_center=cfg.yaw_center)
    result.surface = surface
    result.ambiguous = amb
    return result


def state_errors(estimate_state, truth) -> dict:
    """Per-block absolute errors: RIS position (m), yaw (rad), per-user position (m) and clock (s)."""
    e = np.asarray(estimate_state, dtype=float)
    t = np.asarray(truth, dtype=float)
    n_users = (t.size - 4) // 4
    return {
        "ris_position": float(np.linalg.norm(e[:3] - t[:3])),
        "ris_yaw": float(abs(wrap_angle(e[3] - t[3]))),
        "user_position": [float(np.linalg.norm(e[4 + 4 * m : 7 + 4 * m] - t[4 + 4 * m : 7 + 4 * m])) for m in range(n_users)],
        "clock_offset": [float(abs(e[7 + 4 * m] - t[7 + 4 * m])) for m in range(n_users)],
    }
