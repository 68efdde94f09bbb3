"""Scene description, placement constraints, and the deterministic angle maps.

The scene is a straight road along the x axis with transmitter and receiver
vehicles on it and two rectangular scatterer strips, one on each side of the
road.  Everything downstream (densities, spectra, simulation, fitting) takes
the validated scene produced here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    CoincidentPoint,
    ConstraintViolation,
    DegenerateGeometry,
    NonPositiveArea,
    NonPositiveFrequency,
)

SPEED_OF_LIGHT = 299_792_458.0

CONFIG_KEYS = (
    "x_t", "y_t", "v_t", "gamma_t",
    "x_r", "y_r", "v_r", "gamma_r",
    "a1", "b1", "c1", "d1",
    "a2", "b2", "c2", "d2",
    "fc", "k_factor",
)


def wrap_angle(theta):
    """Normalize an angle (scalar or array) to (-pi, pi].

    This is the only place wrap-around is handled; every angle in the
    package lives on this branch.
    """
    theta = np.asarray(theta, dtype=float)
    out = np.mod(-theta + math.pi, 2.0 * math.pi)
    out = math.pi - out
    # mod maps -pi to +pi already; guard against -pi from rounding
    out = np.where(out <= -math.pi, math.pi, out)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class VehicleState:
    """Position (m), speed (m/s) and motion direction (rad) of one vehicle."""

    x: float
    y: float
    v: float
    gamma: float

    def __post_init__(self):
        if self.v < 0:
            raise ConstraintViolation(f"vehicle speed must be non-negative, got {self.v}")
        object.__setattr__(self, "gamma", wrap_angle(self.gamma))


@dataclass(frozen=True)
class RssRegion:
    """Axis-aligned scatterer strip: x in [a, b], y in [c, d]."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ConstraintViolation(f"region requires a < b, got a={self.a}, b={self.b}")
        if not self.c < self.d:
            raise ConstraintViolation(f"region requires c < d, got c={self.c}, d={self.d}")

    @property
    def area(self) -> float:
        return (self.b - self.a) * (self.d - self.c)

    @property
    def length(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class ModelConfig:
    """Full scene description prior to validation."""

    tx: VehicleState
    rx: VehicleState
    upper: RssRegion
    lower: RssRegion
    fc: float
    k_factor: float = 0.0


@dataclass(frozen=True)
class ValidatedConfig:
    """Scene with every placement constraint checked and derived scales cached.

    All downstream operations take only this type.  Instances are immutable
    and hashable, so support construction can be memoized on them.
    """

    x_t: float
    y_t: float
    v_t: float
    gamma_t: float
    x_r: float
    y_r: float
    v_r: float
    gamma_r: float
    a1: float
    b1: float
    c1: float
    d1: float
    a2: float
    b2: float
    c2: float
    d2: float
    fc: float
    k_factor: float
    # derived
    lam: float
    f_tmax: float
    f_rmax: float
    f_dmax: float
    road_width: float
    area1: float
    area2: float
    area: float

    @property
    def config(self) -> ModelConfig:
        return ModelConfig(
            tx=VehicleState(self.x_t, self.y_t, self.v_t, self.gamma_t),
            rx=VehicleState(self.x_r, self.y_r, self.v_r, self.gamma_r),
            upper=RssRegion(self.a1, self.b1, self.c1, self.d1),
            lower=RssRegion(self.a2, self.b2, self.c2, self.d2),
            fc=self.fc,
            k_factor=self.k_factor,
        )

    def replace(self, **changes) -> "ValidatedConfig":
        """Rebuild and re-validate with some raw fields changed."""
        raw = dict(
            x_t=self.x_t, y_t=self.y_t, v_t=self.v_t, gamma_t=self.gamma_t,
            x_r=self.x_r, y_r=self.y_r, v_r=self.v_r, gamma_r=self.gamma_r,
            a1=self.a1, b1=self.b1, c1=self.c1, d1=self.d1,
            a2=self.a2, b2=self.b2, c2=self.c2, d2=self.d2,
            fc=self.fc, k_factor=self.k_factor,
        )
        raw.update(changes)
        return validate_config(config_from_mapping(raw))


class LosParameters(NamedTuple):
    f_los: float
    d_los: float
    alpha_los: float


@dataclass(frozen=True)
class CriticalAngles:
    """Departure/arrival angles subtended by the eight strip vertices.

    ``alpha[r-1]`` and ``beta[r-1]`` correspond to vertex ``r`` in the order
    (b1,c1), (b1,d1), (a1,d1), (a1,c1), (a2,d2), (a2,c2), (b2,c2), (b2,d2).
    """

    alpha: tuple
    beta: tuple


@dataclass(frozen=True)
class GeometryConstants:
    """The twenty slope/ratio constants plus line-of-sight quantities."""

    m: tuple
    m_los: float
    alpha_los: float
    d_los: float
    f_los: float


def validate_config(cfg: ModelConfig) -> ValidatedConfig:
    """Check every placement constraint and populate derived quantities.

    Constraints are strict inequalities; configurations whose strips touch
    the vehicle line are rejected because the angle-pair density diverges
    there (csc^3 of the angle difference).
    """
    tx, rx, up, lo = cfg.tx, cfg.rx, cfg.upper, cfg.lower
    if not tx.x < rx.x:
        raise ConstraintViolation(f"requires x_t < x_r, got x_t={tx.x}, x_r={rx.x}")
    if not max(up.a, lo.a) < tx.x:
        raise ConstraintViolation(
            f"requires max(a1, a2) < x_t, got a1={up.a}, a2={lo.a}, x_t={tx.x}")
    if not rx.x < min(up.b, lo.b):
        raise ConstraintViolation(
            f"requires x_r < min(b1, b2), got b1={up.b}, b2={lo.b}, x_r={rx.x}")
    if not max(tx.y, rx.y) < up.c:
        raise ConstraintViolation(
            f"requires max(y_t, y_r) < c1, got y_t={tx.y}, y_r={rx.y}, c1={up.c}")
    if not lo.d < min(tx.y, rx.y):
        raise ConstraintViolation(
            f"requires d2 < min(y_t, y_r), got d2={lo.d}, y_t={tx.y}, y_r={rx.y}")

    if cfg.fc <= 0:
        raise NonPositiveFrequency(f"carrier frequency must be positive, got {cfg.fc}")
    if cfg.k_factor < 0:
        raise ConstraintViolation(f"Rician K factor must be non-negative, got {cfg.k_factor}")

    area1, area2 = up.area, lo.area
    if area1 <= 0 or area2 <= 0:
        raise NonPositiveArea(f"region areas must be positive, got {area1}, {area2}")

    lam = SPEED_OF_LIGHT / cfg.fc
    f_tmax = tx.v / lam
    f_rmax = rx.v / lam
    f_dmax = f_tmax + f_rmax
    if f_dmax <= 0:
        raise NonPositiveFrequency("both vehicles are stationary; no Doppler scale")

    return ValidatedConfig(
        x_t=tx.x, y_t=tx.y, v_t=tx.v, gamma_t=tx.gamma,
        x_r=rx.x, y_r=rx.y, v_r=rx.v, gamma_r=rx.gamma,
        a1=up.a, b1=up.b, c1=up.c, d1=up.d,
        a2=lo.a, b2=lo.b, c2=lo.c, d2=lo.d,
        fc=cfg.fc, k_factor=cfg.k_factor,
        lam=lam, f_tmax=f_tmax, f_rmax=f_rmax, f_dmax=f_dmax,
        road_width=up.c - lo.d,
        area1=area1, area2=area2, area=area1 + area2,
    )


def config_from_mapping(values) -> ModelConfig:
    """Build a ModelConfig from a flat key/value mapping.

    Recognized keys are exactly ``CONFIG_KEYS`` plus the optional
    ``speed_unit`` (``ms`` default, ``kmh`` converts on ingestion).
    """
    vals = {str(k).lower(): v for k, v in dict(values).items()}
    unit = str(vals.pop("speed_unit", "ms")).lower()
    missing = [k for k in CONFIG_KEYS if k not in vals]
    if missing:
        raise ConstraintViolation(f"missing config keys: {', '.join(missing)}")
    unknown = set(vals) - set(CONFIG_KEYS)
    if unknown:
        raise ConstraintViolation(f"unknown config keys: {', '.join(sorted(unknown))}")
    num = {k: float(vals[k]) for k in CONFIG_KEYS}
    if unit in ("kmh", "km/h"):
        num["v_t"] /= 3.6
        num["v_r"] /= 3.6
    elif unit not in ("ms", "m/s"):
        raise ConstraintViolation(f"speed_unit must be 'ms' or 'kmh', got {unit!r}")
    return ModelConfig(
        tx=VehicleState(num["x_t"], num["y_t"], num["v_t"], num["gamma_t"]),
        rx=VehicleState(num["x_r"], num["y_r"], num["v_r"], num["gamma_r"]),
        upper=RssRegion(num["a1"], num["b1"], num["c1"], num["d1"]),
        lower=RssRegion(num["a2"], num["b2"], num["c2"], num["d2"]),
        fc=num["fc"],
        k_factor=num["k_factor"],
    )


def load_config_file(path) -> ModelConfig:
    """Parse a flat ``key = value`` text file ('#' starts a comment)."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConstraintViolation(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    if not values:
        raise ConstraintViolation(f"{path}: empty config file")
    return config_from_mapping(values)


def _angles_about(x0, y0, x, y, what):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x0
    dy = y - y0
    if np.any((dx == 0.0) & (dy == 0.0)):
        raise CoincidentPoint(f"point coincides with the {what} position")
    ang = np.arctan2(dy, dx)
    if ang.ndim == 0:
        return float(ang)
    return ang


def aod_of_point(cfg: ValidatedConfig, x, y):
    """Angle of departure of the point(s) seen from the transmitter, in (-pi, pi]."""
    return _angles_about(cfg.x_t, cfg.y_t, x, y, "transmitter")


def aoa_of_point(cfg: ValidatedConfig, x, y):
    """Angle of arrival of the point(s) seen from the receiver, in (-pi, pi]."""
    return _angles_about(cfg.x_r, cfg.y_r, x, y, "receiver")


def doppler_of_angles(cfg: ValidatedConfig, alpha, beta):
    """Doppler shift (Hz) of a single-bounce path with the given angle pair."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    out = (cfg.f_tmax * np.cos(alpha - cfg.gamma_t)
           + cfg.f_rmax * np.cos(beta - cfg.gamma_r))
    if out.ndim == 0:
        return float(out)
    return out


def doppler_of_points(cfg: ValidatedConfig, x, y):
    """Doppler shift (Hz) of scatterers at the given positions."""
    return doppler_of_angles(cfg, aod_of_point(cfg, x, y), aoa_of_point(cfg, x, y))


def los_parameters(cfg: ValidatedConfig) -> LosParameters:
    """Direct-path Doppler shift, distance, and departure angle."""
    m_los = (cfg.y_r - cfg.y_t) / (cfg.x_r - cfg.x_t)
    alpha_los = math.atan(m_los)
    d_los = math.hypot(cfg.x_r - cfg.x_t, cfg.y_r - cfg.y_t)
    f_los = (cfg.f_tmax * math.cos(alpha_los - cfg.gamma_t)
             + cfg.f_rmax * math.cos(math.pi + alpha_los - cfg.gamma_r))
    return LosParameters(f_los=f_los, d_los=d_los, alpha_los=alpha_los)


def region_vertices(cfg: ValidatedConfig):
    """The eight strip vertices in critical-angle order (v1..v8)."""
    return (
        (cfg.b1, cfg.c1), (cfg.b1, cfg.d1), (cfg.a1, cfg.d1), (cfg.a1, cfg.c1),
        (cfg.a2, cfg.d2), (cfg.a2, cfg.c2), (cfg.b2, cfg.c2), (cfg.b2, cfg.d2),
    )


def critical_angles(cfg: ValidatedConfig) -> CriticalAngles:
    """Departure and arrival angles of the eight strip vertices.

    Vertices 3 and 4 sit up-left of both vehicles (+pi branch), vertices
    5 and 6 down-left (-pi branch); the rest are on the principal branch.
    """
    verts = region_vertices(cfg)
    alpha = tuple(aod_of_point(cfg, vx, vy) for vx, vy in verts)
    beta = tuple(aoa_of_point(cfg, vx, vy) for vx, vy in verts)
    return CriticalAngles(alpha=alpha, beta=beta)


def geometry_constants(cfg: ValidatedConfig) -> GeometryConstants:
    """Evaluate the twenty geometry ratios used by the closed-form supports."""
    x_t, y_t, x_r, y_r = cfg.x_t, cfg.y_t, cfg.x_r, cfg.y_r
    pairs = (
        (cfg.b1 - x_t, cfg.b1 - x_r),   # m1
        (y_t - y_r, cfg.b1 - x_r),      # m2
        (x_t - x_r, cfg.c1 - y_r),      # m3
        (cfg.c1 - y_t, cfg.c1 - y_r),   # m4
        (x_t - x_r, cfg.d1 - y_r),      # m5
        (cfg.d1 - y_t, cfg.d1 - y_r),   # m6
        (cfg.a1 - x_t, cfg.a1 - x_r),   # m7
        (y_t - y_r, cfg.a1 - x_r),      # m8
        (x_t - x_r, cfg.d2 - y_r),      # m9
        (cfg.d2 - y_t, cfg.d2 - y_r),   # m10
        (cfg.a2 - x_t, cfg.a2 - x_r),   # m11
        (y_t - y_r, cfg.a2 - x_r),      # m12
        (x_t - x_r, cfg.c2 - y_r),      # m13
        (cfg.c2 - y_t, cfg.c2 - y_r),   # m14
        (cfg.b2 - x_t, cfg.b2 - x_r),   # m15
        (y_t - y_r, cfg.b2 - x_r),      # m16
        (cfg.d1 - y_t, cfg.b1 - x_t),   # m17
        (cfg.d1 - y_t, cfg.a1 - x_t),   # m18
        (cfg.c2 - y_t, cfg.a2 - x_t),   # m19
        (cfg.c2 - y_t, cfg.b2 - x_t),   # m20
    )
    m = []
    for q, (num, den) in enumerate(pairs, start=1):
        if den == 0.0:
            raise DegenerateGeometry(f"m{q} has a vanishing denominator")
        m.append(num / den)
    los = los_parameters(cfg)
    m_los = (y_r - y_t) / (x_r - x_t)
    return GeometryConstants(
        m=tuple(m), m_los=m_los, alpha_los=los.alpha_los,
        d_los=los.d_los, f_los=los.f_los,
    )
