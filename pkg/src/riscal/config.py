"""TOML scenario configuration.

Sections mirror :class:`ScenarioConfig`; unknown keys are rejected so a typo
never silently falls back to a default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .estimator import InitSearchConfig
from .fim import KNOWN_VARIANTS, STATE_NAMES
from .scene import PlanarArray, RisState, Scenario, UserState, Waveform


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayConfig:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    array: tuple[int, int] = (16, 16)


@dataclass(frozen=True)
class RisConfig:
    position: tuple[float, float, float] = (4.0, 10.0, 0.0)
    orientation_deg: tuple[float, float, float] = (0.0, 0.0, -90.0)
    array: tuple[int, int] = (20, 20)


@dataclass(frozen=True)
class UserConfig:
    position: tuple[float, float, float] = (8.0, 8.0, -5.0)
    clock_offset_ns: float = 0.0


@dataclass(frozen=True)
class PriorConfig:
    box_lo: tuple[float, float, float] = (0.0, 0.0, -5.5)
    box_hi: tuple[float, float, float] = (10.0, 10.0, -4.5)
    yaw_interval_deg: tuple[float, float] = (-110.0, -70.0)
    distance_step: float = 0.1
    yaw_step_deg: float = 0.1
    basin_threshold: float = 0.05


@dataclass(frozen=True)
class MapConfig:
    area_lo: tuple[float, float] = (0.0, 0.0)
    area_hi: tuple[float, float] = (10.0, 10.0)
    height: float = -5.0
    nx: int = 50
    ny: int = 50
    reduced_transmissions: int = 50


@dataclass(frozen=True)
class SweepConfig:
    ris_sizes: tuple[int, ...] = (100, 400, 900)
    variants: tuple[str, ...] = ("benchmark", "known_pRy", "known_oR", "known_pU")
    n_users: tuple[int, ...] = (1, 5, 10)
    user_area_corner: tuple[float, float, float] = (6.5, 5.5, -5.0)
    user_area_size: tuple[float, float] = (3.0, 3.0)
    clock_offset_ns: float = 10.0


@dataclass(frozen=True)
class OfdmaConfig:
    split: str = "interleaved"  # or "block"
    split_transmissions: bool = False
    power_per_user: bool = False  # True: each user spends its full power on its own subcarriers

    def __post_init__(self):
        if self.split not in ("interleaved", "block"):
            raise ConfigError(f"ofdma.split must be 'interleaved' or 'block', got {self.split!r}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    trials: int = 100
    max_iter: int = 30
    workers: int = 1
    zero_noise: bool = False
    known: tuple[str, ...] = ()  # state names, e.g. ("y_r",)


@dataclass(frozen=True)
class ScenarioConfig:
    waveform: Waveform = field(default_factory=Waveform)
    bs: ArrayConfig = field(default_factory=ArrayConfig)
    ris: RisConfig = field(default_factory=RisConfig)
    users: tuple[UserConfig, ...] = (UserConfig(),)
    prior: PriorConfig = field(default_factory=PriorConfig)
    map: MapConfig = field(default_factory=MapConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    ofdma: OfdmaConfig = field(default_factory=OfdmaConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def scenario(self, users=None, ris_array=None, n_transmissions=None) -> Scenario:
        wf = self.waveform
        if n_transmissions is not None:
            wf = Waveform(**{**_asdict(wf), "n_transmissions": n_transmissions})
        if users is None:
            users = [UserState(np.array(u.position, float), u.clock_offset_ns * 1e-9) for u in self.users]
        return Scenario(
            waveform=wf,
            bs_array=PlanarArray(*self.bs.array),
            ris_array=PlanarArray(*(ris_array or self.ris.array)),
            bs_position=np.array(self.bs.position, float),
            ris=RisState(np.array(self.ris.position, float), np.radians(self.ris.orientation_deg)),
            users=tuple(users),
        )

    def search(self) -> InitSearchConfig:
        p = self.prior
        return InitSearchConfig(
            tuple(p.box_lo),
            tuple(p.box_hi),
            tuple(math.radians(v) for v in p.yaw_interval_deg),
            p.distance_step,
            math.radians(p.yaw_step_deg),
            p.basin_threshold,
        )


def _asdict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    extra = sorted(set(data) - set(known))
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(extra)}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


_SECTIONS = {
    "waveform": Waveform,
    "bs": ArrayConfig,
    "ris": RisConfig,
    "prior": PriorConfig,
    "map": MapConfig,
    "sweep": SweepConfig,
    "ofdma": OfdmaConfig,
    "run": RunConfig,
}


def config_from_dict(data: dict) -> ScenarioConfig:
    extra = sorted(set(data) - set(_SECTIONS) - {"users"})
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(extra)}")
    kwargs = {name: _build(cls, data[name], name) for name, cls in _SECTIONS.items() if name in data}
    if "users" in data:
        users = data["users"]
        if not isinstance(users, list) or not users:
            raise ConfigError("[[users]] must be a non-empty array of tables")
        kwargs["users"] = tuple(_build(UserConfig, u, f"users.{i}") for i, u in enumerate(users))
    cfg = ScenarioConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig) -> None:
    wf = cfg.waveform
    if wf.n_transmissions < 1 or wf.n_subcarriers < 1:
        raise ConfigError("waveform: counts must be positive")
    for name, arr in (("bs.array", cfg.bs.array), ("ris.array", cfg.ris.array)):
        if len(arr) != 2 or min(arr) < 1:
            raise ConfigError(f"{name} must be two positive integers")
    if cfg.map.nx < 1 or cfg.map.ny < 1 or cfg.map.reduced_transmissions < 1:
        raise ConfigError("map: grid sizes must be positive")
    if cfg.run.trials < 1 or cfg.run.max_iter < 1 or cfg.run.workers < 1:
        raise ConfigError("run: trials, max_iter and workers must be positive")
    if cfg.prior.distance_step <= 0 or cfg.prior.yaw_step_deg <= 0:
        raise ConfigError("prior: steps must be positive")
    for n in cfg.sweep.ris_sizes:
        if n < 1 or math.isqrt(n) ** 2 != n:
            raise ConfigError(f"sweep.ris_sizes entries must be perfect squares, got {n}")
    bad = sorted(set(cfg.run.known) - set(STATE_NAMES))
    if bad:
        raise ConfigError(f"run.known: unknown state name(s) {bad}; choose from {list(STATE_NAMES)}")
    bad = sorted(set(cfg.sweep.variants) - set(KNOWN_VARIANTS))
    if bad:
        raise ConfigError(f"sweep.variants: unknown variant(s) {bad}")
    if any(m < 1 for m in cfg.sweep.n_users):
        raise ConfigError("sweep.n_users entries must be positive")


def load_config(path) -> ScenarioConfig:
    """Parse a TOML file; syntax errors keep tomllib's line/column message."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return config_from_dict(data)
