"""Two-path uplink OFDM channel through a RIS.

The received symbol on transmission ``g`` and subcarrier ``k`` after combining
is ``mu = w_g^T (h_BU,k + h_R,g,k) x_gk`` with

    h_BU,k   = a_BU * a_BU(t_BU) * exp(-j 2 pi df k tau_BU)
    h_R,g,k  = a_R * a_BR(t_BR) * (a_RB^T Omega_g a_RU) * exp(-j 2 pi df k tau_R)

Powers are in mW throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import direction_and_distance
from .scene import Waveform


class ChannelGains(NamedTuple):
    bu: complex
    ris: complex


@dataclass(frozen=True)
class SoundingPlan:
    ris_profiles: np.ndarray  # (G, N_R), unit modulus
    combiners: np.ndarray  # (G, N_B), unit norm rows
    pilots: np.ndarray  # (G, K)

    @property
    def n_transmissions(self) -> int:
        return self.ris_profiles.shape[0]


def steering_vector(positions: np.ndarray, t_local, wavelength: float) -> np.ndarray:
    """Far-field array response ``exp(j 2pi/lambda p^T t)`` for each element."""
    return np.exp(1j * (2 * np.pi / wavelength) * (positions @ np.asarray(t_local, dtype=float)))


def delay_phase(tau: float, spacing: float, k) -> np.ndarray:
    return np.exp(-2j * np.pi * spacing * np.asarray(k) * tau)


def bu_channel(gain: complex, a_bu: np.ndarray, tau: float, spacing: float, k) -> np.ndarray:
    return gain * a_bu * delay_phase(tau, spacing, k)


def ris_inner(a_rb: np.ndarray, profile: np.ndarray, a_ru: np.ndarray) -> complex:
    """``a_RB^T diag(profile) a_RU``."""
    if not (a_rb.shape == profile.shape == a_ru.shape):
        raise ValueError(f"RIS dimension mismatch: {a_rb.shape}, {profile.shape}, {a_ru.shape}")
    return complex(np.sum(a_rb * profile * a_ru))


def ris_channel(gain, a_br, a_rb, a_ru, profile, tau, spacing, k) -> np.ndarray:
    return gain * a_br * ris_inner(a_rb, profile, a_ru) * delay_phase(tau, spacing, k)


def make_sounding_plan(
    seed,
    n_transmissions: int,
    n_ris: int,
    n_bs: int,
    n_subcarriers: int = 1,
    pilot_energy: float = 1.0,
) -> SoundingPlan:
    """Random RIS phase profiles and BS combiners.

    RIS phases are Uniform(-pi, pi); combiners have random phases and unit norm.
    Pilots are all equal, ``sqrt(pilot_energy)``.
    """
    if min(n_transmissions, n_ris, n_bs, n_subcarriers) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    ris = np.exp(1j * rng.uniform(-np.pi, np.pi, size=(n_transmissions, n_ris)))
    comb = np.exp(1j * rng.uniform(-np.pi, np.pi, size=(n_transmissions, n_bs))) / np.sqrt(n_bs)
    pilots = np.full((n_transmissions, n_subcarriers), np.sqrt(pilot_energy), dtype=complex)
    return SoundingPlan(ris, comb, pilots)


def path_gains(p_b, p_r, p_u, wavelength: float, seed) -> ChannelGains:
    """Free-space amplitudes with uniformly random phases."""
    _, d_bu = direction_and_distance(p_b, p_u)
    _, d_br = direction_and_distance(p_b, p_r)
    _, d_ru = direction_and_distance(p_r, p_u)
    rng = np.random.default_rng(seed)
    ph = rng.uniform(-np.pi, np.pi, size=2)
    amp_bu = wavelength / (4 * np.pi * d_bu)
    amp_r = wavelength**2 / ((4 * np.pi) ** 2 * d_br * d_ru)
    return ChannelGains(complex(amp_bu * np.exp(1j * ph[0])), complex(amp_r * np.exp(1j * ph[1])))


def noise_free_symbol(plan: SoundingPlan, h: np.ndarray, g: int, k: int) -> complex:
    w = plan.combiners[g]
    if w.shape != h.shape:
        raise ValueError(f"combiner length {w.shape} does not match channel {h.shape}")
    return complex(w @ h * plan.pilots[g, k])


def noise_variance(wf: Waveform) -> float:
    """Per-subcarrier noise power in mW (unit-norm combiner leaves it unchanged)."""
    return 10 ** ((wf.noise_psd_dbm_hz + wf.noise_figure_db) / 10) * wf.subcarrier_spacing


def pilot_energy(wf: Waveform) -> float:
    """Transmit power split evenly over the subcarriers, mW per subcarrier."""
    return 10 ** (wf.tx_power_dbm / 10) / wf.n_subcarriers


def to_dbm(p_mw: float) -> float:
    return 10 * np.log10(p_mw)
