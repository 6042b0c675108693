"""Sectorized base-station antenna gain, UMi/UMa aerial path loss and RSRP.

All functions accept scalars or numpy arrays where that makes sense, so the
same code path serves single queries and whole coverage grids. Logarithms
in the path-loss expressions are base 10, frequencies are in GHz, distances
and altitudes in meters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import NamedTuple

import numpy as np

from .geometry import as_vec3, los_mask

Z_LOW_MIN = 1.5
Z_SPLIT = 22.5
Z_MAX = 300.0
Z_MACRO_NLOS_MAX = 100.0
AF_FLOOR_DB = -30.0


class GbsClass(str, Enum):
    MICRO = "micro"
    MACRO = "macro"


@dataclass(frozen=True)
class RadioConfig:
    f_c: float = 2.0
    p_ref: float = 15.2
    g_e_max: float = 8.0
    a_m: float = 30.0
    sla_v: float = 30.0
    theta_3db: float = 65.0
    phi_3db: float = 65.0
    n_elements: int = 8
    element_spacing: float = 0.5
    downtilt: float = 10.0

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError("f_c must be positive")
        if int(self.n_elements) < 1:
            raise ValueError("n_elements must be >= 1")
        if not (self.theta_3db > 0 and self.phi_3db > 0):
            raise ValueError("beamwidths must be positive")

    # JSON keys follow the scenario file schema.
    _JSON_KEYS = {
        "f_c": "fc_ghz",
        "p_ref": "p_ref_dbm",
        "g_e_max": "ge_max_dbi",
        "a_m": "a_m_db",
        "sla_v": "sla_v_db",
        "theta_3db": "theta_3db",
        "phi_3db": "phi_3db",
        "n_elements": "n_elements",
        "element_spacing": "element_spacing",
        "downtilt": "downtilt_deg",
    }

    def to_json(self) -> dict:
        return {self._JSON_KEYS[k]: v for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, data: dict) -> "RadioConfig":
        inverse = {v: k for k, v in cls._JSON_KEYS.items()}
        unknown = set(data) - set(inverse)
        if unknown:
            raise ValueError(f"unknown radio keys: {sorted(unknown)}")
        kwargs = {inverse[k]: v for k, v in data.items()}
        if "n_elements" in kwargs:
            kwargs["n_elements"] = int(kwargs["n_elements"])
        return cls(**kwargs)


@dataclass(frozen=True)
class GbsConfig:
    id: int
    position: tuple[float, float, float]
    gbs_class: GbsClass
    sector_azimuths: tuple[float, float, float] = (0.0, 120.0, 240.0)
    radio: RadioConfig = field(default_factory=RadioConfig)

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in as_vec3(self.position)))
        object.__setattr__(self, "gbs_class", GbsClass(self.gbs_class))
        az = tuple(float(a) % 360.0 for a in self.sector_azimuths)
        if len(az) != 3 or len(set(az)) != 3:
            raise ValueError(f"GBS {self.id}: need 3 distinct sector azimuths, got {self.sector_azimuths}")
        object.__setattr__(self, "sector_azimuths", tuple(float(a) for a in self.sector_azimuths))


class AnglePair(NamedTuple):
    """Zenith ``theta`` (0 = up, 90 = horizon) and azimuth ``phi`` off boresight, degrees."""

    theta: float
    phi: float


def element_gain(angles: AnglePair, cfg: RadioConfig):
    theta, phi = np.asarray(angles[0], dtype=float), np.asarray(angles[1], dtype=float)
    vertical = -np.minimum(12.0 * ((theta - 90.0) / cfg.theta_3db) ** 2, cfg.sla_v)
    horizontal = -np.minimum(12.0 * (phi / cfg.phi_3db) ** 2, cfg.a_m)
    return cfg.g_e_max - np.minimum(-(vertical + horizontal), cfg.a_m)


def steering_zenith(cfg: RadioConfig) -> float:
    return 90.0 + cfg.downtilt


def array_factor(angles: AnglePair, cfg: RadioConfig):
    """Vertical uniform linear array steered to the downtilt, in dB.

    Peaks at ``10 log10(n)``; exact nulls are clamped to -30 dB.
    """
    theta = np.asarray(angles[0], dtype=float)
    n = int(cfg.n_elements)
    k = np.arange(n)
    steer = math.cos(math.radians(steering_zenith(cfg)))
    phase = 2.0 * np.pi * cfg.element_spacing * (np.cos(np.radians(theta))[..., None] - steer) * k
    total = np.exp(1j * phase).sum(axis=-1) / math.sqrt(n)
    power = np.abs(total) ** 2
    with np.errstate(divide="ignore"):
        af = 10.0 * np.log10(power)
    return np.maximum(af, AF_FLOOR_DB)


def _wrap180(deg):
    # maps to (-180, 180]
    return 180.0 - np.mod(180.0 - deg, 360.0)


def gbs_angles(gbs: GbsConfig, points) -> tuple[np.ndarray, np.ndarray]:
    """Zenith angle and azimuth (from +x, counter-clockwise) of each point seen from the GBS."""
    v = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(gbs.position)
    horiz = np.hypot(v[:, 0], v[:, 1])
    zenith = np.degrees(np.arctan2(horiz, v[:, 2]))
    azimuth = np.degrees(np.arctan2(v[:, 1], v[:, 0]))
    return zenith, azimuth


def antenna_gain_many(gbs: GbsConfig, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.all(pts == np.asarray(gbs.position), axis=1)):
        raise ValueError(f"UAV position coincides with GBS {gbs.id}")
    cfg = gbs.radio
    zenith, azimuth = gbs_angles(gbs, pts)
    # The element pattern is tilted with the panel, the array is steered to the same tilt.
    local_theta = np.clip(zenith - cfg.downtilt, 0.0, 180.0)
    best = np.full(len(pts), -np.inf)
    for sector_az in gbs.sector_azimuths:
        phi = _wrap180(azimuth - sector_az)
        best = np.maximum(best, element_gain(AnglePair(local_theta, phi), cfg))
    return best + array_factor(AnglePair(zenith, 0.0), cfg)


def antenna_gain(gbs: GbsConfig, uav_pos) -> float:
    return float(antenna_gain_many(gbs, as_vec3(uav_pos)[None])[0])


def fspl(d, f_c):
    d = np.maximum(np.asarray(d, dtype=float), 1.0)
    return 32.4 + 20.0 * np.log10(d) + 20.0 * np.log10(f_c)


def _check_altitude(z, upper: float = Z_MAX):
    z = np.asarray(z, dtype=float)
    if np.any(z < Z_LOW_MIN) or np.any(z > upper):
        raise ValueError(f"altitude outside modeled range [{Z_LOW_MIN}, {upper}] m: {z}")
    return z


def path_loss_los(gbs_class, d, z, f_c):
    gbs_class = GbsClass(gbs_class)
    z = _check_altitude(z)
    d = np.maximum(np.asarray(d, dtype=float), 1.0)
    ld, lf = np.log10(d), 20.0 * np.log10(f_c)
    low = z <= Z_SPLIT
    if gbs_class is GbsClass.MICRO:
        w1 = 32.4 + 21.0 * ld + lf
        w2 = 30.9 + (22.25 - 0.5 * np.log10(z)) * ld + lf
        out = np.where(low, w1, np.maximum(fspl(d, f_c), w2))
    else:
        w3 = 32.4 + 20.0 * ld + lf
        w4 = 28.0 + 22.0 * ld + lf
        out = np.where(low, w3, w4)
    return out[()] if out.ndim == 0 else out


def nlos_altitude_clamped(gbs_class, z) -> np.ndarray:
    """Where the macro NLoS model is evaluated at 100 m instead of the true altitude."""
    return (GbsClass(gbs_class) is GbsClass.MACRO) & (np.asarray(z, dtype=float) > Z_MACRO_NLOS_MAX)


def path_loss_nlos(gbs_class, d, z, f_c, *, with_flag: bool = False):
    """NLoS loss; macro links above 100 m use the 100 m expression.

    With ``with_flag`` a ``(loss, clamped)`` pair is returned where
    ``clamped`` marks the samples that hit that altitude clamp.
    """
    gbs_class = GbsClass(gbs_class)
    z = _check_altitude(z)
    d = np.maximum(np.asarray(d, dtype=float), 1.0)
    ld, lf = np.log10(d), 20.0 * np.log10(f_c)
    low = z <= Z_SPLIT
    los = np.asarray(path_loss_los(gbs_class, d, z, f_c))
    clamped = nlos_altitude_clamped(gbs_class, z)
    if gbs_class is GbsClass.MICRO:
        w5 = 22.4 + 35.3 * ld + 21.3 * np.log10(f_c) - 0.3 * (z - 1.5)
        w6 = 32.4 + (43.2 - 7.6 * np.log10(z)) * ld + lf
        out = np.maximum(los, np.where(low, w5, w6))
    else:
        w7 = 13.54 + 39.08 * ld + lf - 0.6 * (z - 1.5)
        zc = np.minimum(z, Z_MACRO_NLOS_MAX)
        w8 = -17.5 + (46.0 - 7.0 * np.log10(zc)) * ld + 20.0 * np.log10(40.0 * np.pi * f_c / 3.0)
        out = np.where(low, np.maximum(los, w7), w8)
    out = out[()] if out.ndim == 0 else out
    if with_flag:
        return out, (clamped[()] if np.ndim(clamped) == 0 else clamped)
    return out


def rsrp_many(gbs: GbsConfig, scenario, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    pos = np.asarray(gbs.position)
    d = np.linalg.norm(pts - pos, axis=1)
    z = pts[:, 2]
    los = los_mask(scenario, pos, pts)
    loss = np.where(
        los,
        path_loss_los(gbs.gbs_class, d, z, gbs.radio.f_c),
        path_loss_nlos(gbs.gbs_class, d, z, gbs.radio.f_c),
    )
    return gbs.radio.p_ref + antenna_gain_many(gbs, pts) - loss


def rsrp(gbs: GbsConfig, scenario, uav_pos) -> float:
    return float(rsrp_many(gbs, scenario, as_vec3(uav_pos)[None])[0])


def all_rsrp(scenario, uav_pos) -> list[tuple[int, float]]:
    if not scenario.gbs_list:
        raise ValueError("scenario has no GBS")
    p = as_vec3(uav_pos)[None]
    return [(g.id, float(rsrp_many(g, scenario, p)[0])) for g in scenario.gbs_list]


def best_gbs(scenario, uav_pos) -> tuple[int, float]:
    """Strongest GBS at ``uav_pos``; equal RSRP resolves to the lowest id."""
    ranked = sorted(all_rsrp(scenario, uav_pos), key=lambda t: (-t[1], t[0]))
    return ranked[0]
