"""Fisher information for the channel parameters and the RIS/user states.

Channel parameter order (12):
    az_BU, el_BU, az_BR, el_BR, v2, v3, tau_BU, tau_R, rho_BU, rho_R, xi_BU, xi_R
The first 8 are geometric; the last 4 are the real/imaginary parts of the two
path gains and are marginalised out with a Schur complement.

State order: ``[p_R (3), o3, p_U1 (3), beta_1, ..., p_UM (3), beta_M]``.

Matrices mix units (rad, s, m) and span ~30 orders of magnitude, so every
inversion goes through a symmetric diagonal (Jacobi) rescaling first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelGains, SoundingPlan, noise_variance, path_gains
from .geometry import (
    SPEED_OF_LIGHT,
    _azel_gradient,
    local_direction_from_angles,
    rotation_yaw_derivative,
    unit_vector_jacobian,
)
from .scene import LinkGeometry, RisState, Scenario, UserState, link_geometry

ETA_NAMES = (
    "az_bu", "el_bu", "az_br", "el_br", "v2", "v3", "tau_bu", "tau_r",
    "rho_bu", "rho_r", "xi_bu", "xi_r",
)
N_GEOM = 8
STATE_NAMES = ("x_r", "y_r", "z_r", "o3", "x_u", "y_u", "z_u", "beta")

# Jacobi-scaled condition number above which a FIM is treated as singular.
# Healthy scenes already sit near 1e10-1e11: the direct-path delay couples
# user range and clock offset almost perfectly.
SINGULAR_COND = 1e15


def _dir_derivs(az: float, el: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = local_direction_from_angles((az, el))
    d_az = np.array([-np.sin(az) * np.cos(el), np.cos(az) * np.cos(el), 0.0])
    d_el = np.array([-np.cos(az) * np.sin(el), -np.sin(az) * np.sin(el), np.cos(el)])
    return t, d_az, d_el


@dataclass(frozen=True)
class ArrayModel:
    """Element positions plus carrier/subcarrier constants for one link."""

    bs_positions: np.ndarray  # (N_B, 3)
    ris_positions: np.ndarray  # (N_R, 3)
    wavelength: float
    spacing: float  # subcarrier spacing, Hz

    @classmethod
    def from_scenario(cls, sc: Scenario) -> "ArrayModel":
        wl = sc.waveform.wavelength
        return cls(
            sc.bs_array.element_positions(wl),
            sc.ris_array.element_positions(wl),
            wl,
            sc.waveform.subcarrier_spacing,
        )


def full_parameters(geom: LinkGeometry, gains: ChannelGains) -> np.ndarray:
    return np.concatenate(
        [geom.eta, [gains.bu.real, gains.ris.real, gains.bu.imag, gains.ris.imag]]
    )


def _factors(eta: np.ndarray, arrays: ArrayModel, plan: SoundingPlan):
    """Per-transmission array inner products and their angle derivatives."""
    k0 = 2 * np.pi / arrays.wavelength
    pb, pr = arrays.bs_positions, arrays.ris_positions
    W, Om = plan.combiners, plan.ris_profiles

    t, t_az, t_el = _dir_derivs(eta[0], eta[1])
    a = np.exp(1j * k0 * (pb @ t))
    A = W @ a
    A_az = W @ (1j * k0 * (pb @ t_az) * a)
    A_el = W @ (1j * k0 * (pb @ t_el) * a)

    t, t_az, t_el = _dir_derivs(eta[2], eta[3])
    b = np.exp(1j * k0 * (pb @ t))
    B = W @ b
    B_az = W @ (1j * k0 * (pb @ t_az) * b)
    B_el = W @ (1j * k0 * (pb @ t_el) * b)

    # element x-coordinates are zero, so v1 never enters
    c = np.exp(1j * k0 * (pr[:, 1] * eta[4] + pr[:, 2] * eta[5]))
    C = Om @ c
    C_2 = Om @ (1j * k0 * pr[:, 1] * c)
    C_3 = Om @ (1j * k0 * pr[:, 2] * c)
    return A, A_az, A_el, B, B_az, B_el, C, C_2, C_3


def _subcarriers(plan: SoundingPlan, subcarriers) -> np.ndarray:
    if subcarriers is None:
        return np.arange(plan.pilots.shape[1])
    return np.asarray(subcarriers)


def symbols_from_parameters(
    params: np.ndarray, arrays: ArrayModel, plan: SoundingPlan, subcarriers=None
) -> np.ndarray:
    """Noise-free symbols ``mu[g, k]`` as a function of the 12 channel parameters."""
    params = np.asarray(params, dtype=float)
    ks = _subcarriers(plan, subcarriers)
    A, _, _, B, _, _, C, _, _ = _factors(params, arrays, plan)
    a_bu = params[8] + 1j * params[10]
    a_r = params[9] + 1j * params[11]
    w = 2 * np.pi * arrays.spacing
    e_bu = np.exp(-1j * w * ks * params[6])
    e_r = np.exp(-1j * w * ks * params[7])
    x = plan.pilots[:, ks]
    return x * (a_bu * A[:, None] * e_bu[None, :] + a_r * (B * C)[:, None] * e_r[None, :])


def symbol_gradients(
    params: np.ndarray, arrays: ArrayModel, plan: SoundingPlan, subcarriers=None
) -> np.ndarray:
    """Analytic ``d mu[g, k] / d params``, shape (G, K, 12).

    Each derivative factors into a transmission-dependent array term and a
    subcarrier-dependent delay term, so the array products are formed once per
    transmission.
    """
    params = np.asarray(params, dtype=float)
    ks = _subcarriers(plan, subcarriers)
    A, A_az, A_el, B, B_az, B_el, C, C_2, C_3 = _factors(params, arrays, plan)
    a_bu = params[8] + 1j * params[10]
    a_r = params[9] + 1j * params[11]
    w = 2 * np.pi * arrays.spacing
    e_bu = np.exp(-1j * w * ks * params[6])
    e_r = np.exp(-1j * w * ks * params[7])
    de_bu = -1j * w * ks * e_bu
    de_r = -1j * w * ks * e_r

    # (transmission factor, subcarrier factor) per parameter
    g_part = np.stack(
        [
            a_bu * A_az, a_bu * A_el,
            a_r * B_az * C, a_r * B_el * C,
            a_r * B * C_2, a_r * B * C_3,
            a_bu * A, a_r * B * C,
            A, B * C, 1j * A, 1j * B * C,
        ],
        axis=1,
    )
    k_part = np.stack([e_bu, e_bu, e_r, e_r, e_r, e_r, de_bu, de_r, e_bu, e_r, e_bu, e_r], axis=1)
    x = plan.pilots[:, ks]
    return x[:, :, None] * g_part[:, None, :] * k_part[None, :, :]


def channel_fim(
    params: np.ndarray, arrays: ArrayModel, plan: SoundingPlan, sigma2: float, subcarriers=None
) -> np.ndarray:
    """``(2/sigma2) sum_gk Re{ dmu^H dmu }`` over the 12 channel parameters."""
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    D = symbol_gradients(params, arrays, plan, subcarriers).reshape(-1, 12)
    F = (2.0 / sigma2) * np.real(D.conj().T @ D)
    return 0.5 * (F + F.T)


def _jacobi(M: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.abs(np.diag(M)))
    d[d == 0] = 1.0
    return 1.0 / d


def scaled_condition(M: np.ndarray) -> float:
    if M.size == 0:
        return 1.0
    s = _jacobi(M)
    Ms = M * np.outer(s, s)
    ev = np.linalg.eigvalsh(0.5 * (Ms + Ms.T))
    if ev[0] <= 0:
        return np.inf
    return float(ev[-1] / ev[0])


def is_singular(M: np.ndarray, threshold: float = SINGULAR_COND) -> bool:
    return not scaled_condition(M) < threshold


def scaled_inverse(M: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Jacobi rescaling."""
    s = _jacobi(M)
    Ms = M * np.outer(s, s)
    inv = np.linalg.inv(0.5 * (Ms + Ms.T))
    out = inv * np.outer(s, s)
    return 0.5 * (out + out.T)


def effective_fim(F: np.ndarray, n_keep: int = N_GEOM) -> tuple[np.ndarray, bool]:
    """Schur complement of the nuisance block.

    Returns the effective FIM of the first ``n_keep`` parameters and a flag that
    is True when the nuisance block is (numerically) singular.
    """
    A = F[:n_keep, :n_keep]
    B = F[:n_keep, n_keep:]
    D = F[n_keep:, n_keep:]
    if is_singular(D):
        return A.copy(), True
    s = _jacobi(D)
    Ds = D * np.outer(s, s)
    X = np.linalg.solve(Ds, (B * s[None, :]).T)  # D_s^-1 (B S)^T
    E = A - (B * s[None, :]) @ X
    return 0.5 * (E + E.T), False


def state_jacobian(p_b, ris: RisState, user: UserState) -> np.ndarray:
    """``d eta[:8] / d [p_R, o3, p_U, beta]`` (8x8), gain rows omitted."""
    g = link_geometry(p_b, ris, user)
    J = np.zeros((N_GEOM, 8))
    J[0:2, 4:7] = np.vstack(_azel_gradient(g.t_bu * g.d_bu))
    J[2:4, 0:3] = np.vstack(_azel_gradient(g.t_br * g.d_br))

    Rt = ris.rotation.T
    u_rb = unit_vector_jacobian(-g.t_br, g.d_br)
    u_ru = unit_vector_jacobian(g.t_ru, g.d_ru)
    J[4:6, 0:3] = -(Rt @ (u_rb + u_ru))[1:3]
    J[4:6, 4:7] = (Rt @ u_ru)[1:3]
    dR = rotation_yaw_derivative(ris.orientation)
    J[4:6, 3] = (dR.T @ (-g.t_br + g.t_ru))[1:3]

    J[6, 4:7] = g.t_bu / SPEED_OF_LIGHT
    J[6, 7] = 1.0
    J[7, 0:3] = (g.t_br - g.t_ru) / SPEED_OF_LIGHT
    J[7, 4:7] = g.t_ru / SPEED_OF_LIGHT
    J[7, 7] = 1.0
    return J


def embed_jacobian(J: np.ndarray, m: int, n_users: int) -> np.ndarray:
    """Place user ``m``'s 8-column Jacobian into the multi-user state layout."""
    out = np.zeros((J.shape[0], 4 + 4 * n_users))
    out[:, :4] = J[:, :4]
    out[:, 4 + 4 * m : 8 + 4 * m] = J[:, 4:]
    return out


def state_fim(efim: np.ndarray, J: np.ndarray) -> np.ndarray:
    F = J.T @ efim @ J
    return 0.5 * (F + F.T)


def multi_user_state_fim(efims, jacobians) -> np.ndarray:
    """Sum of per-user state information; the RIS block accumulates."""
    M = len(efims)
    if M < 1 or len(jacobians) != M:
        raise ValueError("need one EFIM and one Jacobian per user")
    total = np.zeros((4 + 4 * M, 4 + 4 * M))
    for m, (E, J) in enumerate(zip(efims, jacobians)):
        total += state_fim(E, embed_jacobian(J, m, M))
    return total


@dataclass(frozen=True)
class Bounds:
    ris_position: float  # m
    ris_yaw: float  # rad
    user_position: np.ndarray  # m, per user
    clock_offset: np.ndarray  # s, per user
    singular: bool = False

    @property
    def ris_yaw_deg(self) -> float:
        return float(np.degrees(self.ris_yaw))

    @property
    def clock_offset_ns(self) -> np.ndarray:
        return self.clock_offset * 1e9

    @property
    def user_position_rms(self) -> float:
        """Root-mean-square over users (comparable to a pooled RMSE)."""
        return float(np.sqrt(np.mean(self.user_position**2)))

    @property
    def clock_offset_rms(self) -> float:
        return float(np.sqrt(np.mean(self.clock_offset**2)))


def _bounds_from_cov(cov_diag: np.ndarray, n_users: int, singular: bool) -> Bounds:
    users = np.array([np.sqrt(cov_diag[4 + 4 * m : 7 + 4 * m].sum()) for m in range(n_users)])
    clocks = np.array([np.sqrt(cov_diag[7 + 4 * m]) for m in range(n_users)])
    return Bounds(
        float(np.sqrt(cov_diag[:3].sum())), float(np.sqrt(cov_diag[3])), users, clocks, singular
    )


def extract_bounds(I_s: np.ndarray, known=()) -> Bounds:
    """Error bounds from a state FIM, optionally with some states known.

    Known states are removed before inversion and contribute zero error.
    A singular FIM gives infinite bounds with ``singular=True``.
    """
    n = I_s.shape[0]
    if n < 8 or (n - 4) % 4:
        raise ValueError(f"state FIM size {n} is not 4 + 4M")
    n_users = (n - 4) // 4
    known = sorted(set(int(i) for i in known))
    if any(i < 0 or i >= n for i in known):
        raise ValueError(f"known index out of range: {known}")
    free = np.setdiff1d(np.arange(n), known)
    if free.size == 0:
        raise ValueError("every state is known; nothing to bound")
    sub = I_s[np.ix_(free, free)]
    diag = np.zeros(n)
    if is_singular(sub):
        diag[free] = np.inf
        return _bounds_from_cov(diag, n_users, True)
    diag[free] = np.diag(scaled_inverse(sub))
    return _bounds_from_cov(diag, n_users, False)


# named known-state variants; indices refer to the single-user layout
KNOWN_VARIANTS = {
    "benchmark": (),
    "known_pRy": (1,),
    "known_oR": (3,),
    "known_pU": (4, 5, 6),
}


@dataclass(frozen=True)
class LinkInformation:
    geometry: LinkGeometry
    gains: ChannelGains
    channel_fim: np.ndarray  # 12x12
    efim: np.ndarray  # 8x8
    jacobian: np.ndarray  # 8x8
    nuisance_singular: bool

    @property
    def state_fim(self) -> np.ndarray:
        return state_fim(self.efim, self.jacobian)


def link_information(
    sc: Scenario,
    user: UserState,
    plan: SoundingPlan,
    gains: ChannelGains | None = None,
    sigma2: float | None = None,
    subcarriers=None,
    gain_seed=0,
    ris: RisState | None = None,
) -> LinkInformation:
    """Channel FIM, effective FIM and state Jacobian for one user."""
    ris = sc.ris if ris is None else ris
    wf = sc.waveform
    geom = link_geometry(sc.bs_position, ris, user)
    if gains is None:
        gains = path_gains(sc.bs_position, ris.position, user.position, wf.wavelength, gain_seed)
    if sigma2 is None:
        sigma2 = noise_variance(wf)
    params = full_parameters(geom, gains)
    F = channel_fim(params, ArrayModel.from_scenario(sc), plan, sigma2, subcarriers)
    E, flag = effective_fim(F)
    J = state_jacobian(sc.bs_position, ris, user)
    return LinkInformation(geom, gains, F, E, J, flag)
