"""Scenario description: waveform numerology, arrays, and true states."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    angles_from_local_direction,
    direction_and_distance,
    euler_to_rotation,
)


@dataclass(frozen=True)
class Waveform:
    carrier_hz: float = 28e9
    bandwidth_hz: float = 400e6
    n_subcarriers: int = 128
    n_transmissions: int = 500
    tx_power_dbm: float = 30.0
    noise_psd_dbm_hz: float = -173.8
    noise_figure_db: float = 10.0

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.n_transmissions < 1:
            raise ValueError("need at least one subcarrier and one transmission")
        if self.bandwidth_hz <= 0 or self.carrier_hz <= 0:
            raise ValueError("bandwidth and carrier must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth_hz / self.n_subcarriers


@dataclass(frozen=True)
class PlanarArray:
    """Uniform planar array lying in the local y-z plane.

    ``spacing=None`` means half a wavelength at the carrier.
    """

    rows: int
    cols: int
    spacing: float | None = None

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols

    def element_positions(self, wavelength: float) -> np.ndarray:
        d = wavelength / 2 if self.spacing is None else self.spacing
        y = (np.arange(self.cols) - (self.cols - 1) / 2) * d
        z = (np.arange(self.rows) - (self.rows - 1) / 2) * d
        yy, zz = np.meshgrid(y, z)
        return np.column_stack([np.zeros(yy.size), yy.ravel(), zz.ravel()])


@dataclass(frozen=True)
class RisState:
    position: np.ndarray
    orientation: np.ndarray  # [o1, o2, o3]; only o3 is estimated

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float))

    @property
    def yaw(self) -> float:
        return float(self.orientation[2])

    @property
    def rotation(self) -> np.ndarray:
        return euler_to_rotation(self.orientation)

    def with_yaw(self, yaw: float) -> "RisState":
        o = self.orientation.copy()
        o[2] = yaw
        return replace(self, orientation=o)


@dataclass(frozen=True)
class UserState:
    position: np.ndarray
    clock_offset: float = 0.0  # seconds

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


@dataclass(frozen=True)
class Scenario:
    waveform: Waveform = field(default_factory=Waveform)
    bs_array: PlanarArray = field(default_factory=lambda: PlanarArray(16, 16))
    ris_array: PlanarArray = field(default_factory=lambda: PlanarArray(20, 20))
    bs_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ris: RisState = field(
        default_factory=lambda: RisState([4.0, 10.0, 0.0], [0.0, 0.0, -np.pi / 2])
    )
    users: tuple[UserState, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bs_position", np.asarray(self.bs_position, dtype=float))
        object.__setattr__(self, "users", tuple(self.users))


@dataclass(frozen=True)
class LinkGeometry:
    """Everything about one BS/RIS/user triple that the channel needs."""

    t_bu: np.ndarray
    d_bu: float
    t_br: np.ndarray
    d_br: float
    t_ru: np.ndarray
    d_ru: float
    t_rb_local: np.ndarray
    t_ru_local: np.ndarray
    eta: np.ndarray  # 8 geometric channel parameters
    gimbal: bool

    @property
    def t_ris_sum_local(self) -> np.ndarray:
        return self.t_rb_local + self.t_ru_local


def link_geometry(p_b, ris: RisState, user: UserState) -> LinkGeometry:
    """Geometric channel parameters for one user.

    ``eta = [az_BU, el_BU, az_BR, el_BR, v2, v3, tau_BU, tau_R]``; the BS frame
    coincides with the global frame.
    """
    p_b = np.asarray(p_b, dtype=float)
    t_bu, d_bu = direction_and_distance(p_b, user.position)
    t_br, d_br = direction_and_distance(p_b, ris.position)
    t_ru, d_ru = direction_and_distance(ris.position, user.position)
    rot = ris.rotation
    t_rb_loc = rot.T @ (-t_br)
    t_ru_loc = rot.T @ t_ru
    a_bu = angles_from_local_direction(t_bu)
    a_br = angles_from_local_direction(t_br)
    v = t_rb_loc + t_ru_loc
    eta = np.array(
        [
            a_bu.azimuth,
            a_bu.elevation,
            a_br.azimuth,
            a_br.elevation,
            v[1],
            v[2],
            d_bu / SPEED_OF_LIGHT + user.clock_offset,
            (d_br + d_ru) / SPEED_OF_LIGHT + user.clock_offset,
        ]
    )
    return LinkGeometry(
        t_bu, d_bu, t_br, d_br, t_ru, d_ru, t_rb_loc, t_ru_loc, eta, a_bu.gimbal or a_br.gimbal
    )


def pack_state(ris: RisState, users) -> np.ndarray:
    """``[p_R, o3, p_U1, beta_1, ..., p_UM, beta_M]``."""
    parts = [ris.position, [ris.yaw]]
    for u in users:
        parts += [u.position, [u.clock_offset]]
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def unpack_state(s, ris_template: RisState) -> tuple[RisState, list[UserState]]:
    s = np.asarray(s, dtype=float)
    if s.size < 8 or (s.size - 4) % 4:
        raise ValueError(f"state length {s.size} is not 4 + 4M")
    ris = RisState(s[:3].copy(), ris_template.orientation.copy()).with_yaw(s[3])
    users = [UserState(s[4 + 4 * m : 7 + 4 * m].copy(), float(s[7 + 4 * m])) for m in range((s.size - 4) // 4)]
    return ris, users
