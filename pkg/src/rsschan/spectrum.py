"""Rician Doppler spectrum assembly, spectral moments, and layout sweeps.

The full spectrum is a discrete line at the direct-path Doppler shift plus
the diffuse marginal density.  Spectral weights follow the power convention
K/(K+1) and 1/(K+1), which sums to unit area exactly and keeps the K factor
interpretable as a power ratio; the amplitude-style square-root weights are
reported in the curve metadata for reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analytic_pdf import (
    _disjoint_support,
    doppler_bounds,
    doppler_moments,
    dpdf,
    dpdf_curve,
)
from .errors import RssError
from .geometry import (
    ModelConfig,
    RssRegion,
    ValidatedConfig,
    VehicleState,
    los_parameters,
    validate_config,
)


@dataclass(frozen=True)
class SpectrumCurve:
    """Sampled spectral density plus an optional discrete line.

    The line is kept as an exact (frequency, weight) record instead of being
    smeared into a grid bin, so moment computations stay exact.
    """

    nu_grid: np.ndarray
    values: np.ndarray
    los_impulse: Optional[tuple] = None
    metadata: dict = field(default_factory=dict)

    @property
    def continuous_mass(self) -> float:
        """Grid-trapezoid mass of the sampled part (resolution limited)."""
        return float(np.trapezoid(self.values, self.nu_grid))

    @property
    def total_mass(self) -> float:
        imp = self.los_impulse[1] if self.los_impulse else 0.0
        return self.continuous_mass + imp


@dataclass(frozen=True)
class DopplerStats:
    """Spread, mean shift, and RMS spread of a Doppler spectrum."""

    b_d: float
    b_1: float
    b_2: float
    nu_min: float
    nu_max: float


def power_weights(k_factor: float) -> tuple:
    """Line and diffuse power shares (K/(K+1), 1/(K+1))."""
    return k_factor / (k_factor + 1.0), 1.0 / (k_factor + 1.0)


def amplitude_weights(k_factor: float) -> tuple:
    """Square-root weight pair; note these do not sum areas to one."""
    return math.sqrt(k_factor / (k_factor + 1.0)), math.sqrt(1.0 / (k_factor + 1.0))


def dpsd(cfg: ValidatedConfig, n: int = 4096, pad: float = 1.0,
         convention: str = "power", abs_tol: float = 1e-8,
         n_tab: int = 2048, workers: int = 1) -> SpectrumCurve:
    """Assemble the normalized Doppler power spectral density.

    ``convention`` selects how the Rician K factor splits the unit area:
    ``power`` uses K/(K+1) and 1/(K+1); ``amplitude`` uses the square-root
    pair renormalized to unit total mass.
    """
    k = cfg.k_factor
    if convention == "power":
        w_imp, w_cont = power_weights(k)
    elif convention == "amplitude":
        a_imp, a_cont = amplitude_weights(k)
        total = a_imp + a_cont
        w_imp, w_cont = a_imp / total, a_cont / total
    else:
        raise ValueError(f"unknown weight convention {convention!r}")

    grid, vals = dpdf_curve(cfg, n=n, pad=pad, abs_tol=abs_tol,
                            n_tab=n_tab, workers=workers)
    los = los_parameters(cfg)
    nu_min, nu_max = doppler_bounds(cfg)
    raw_amp = amplitude_weights(k)
    meta = {
        "convention": convention,
        "weights": (w_imp, w_cont),
        "amplitude_weights_raw": raw_amp,
        "power_weights": power_weights(k),
        "k_factor": k,
        "nu_min": nu_min,
        "nu_max": nu_max,
        "f_los": los.f_los,
        "grid": {"n": n, "pad": pad},
        "config_key": hash(cfg),
        "empty_pieces": _disjoint_support(cfg, n_tab).empty_pieces,
    }
    impulse = (los.f_los, w_imp) if k > 0 else None
    return SpectrumCurve(nu_grid=grid, values=w_cont * vals,
                         los_impulse=impulse, metadata=meta)


def sample_dpsd(cfg: ValidatedConfig, nus, delta_nu: float,
                abs_tol: float = 1e-8, n_tab: int = 2048,
                refine: bool = True) -> np.ndarray:
    """Spectrum values on a measurement grid, line mapped into its bin.

    Mirrors how a sampled periodogram captures a discrete component: the
    line's weight lands in the bin containing it, divided by the spacing.
    """
    nus = np.asarray(nus, dtype=float)
    w_imp, w_cont = power_weights(cfg.k_factor)
    vals = w_cont * dpdf(cfg, nus, abs_tol=abs_tol, n_tab=n_tab, refine=refine)
    if cfg.k_factor > 0:
        f_los = los_parameters(cfg).f_los
        idx = int(round((f_los - nus[0]) / delta_nu))
        if 0 <= idx < nus.size and abs(nus[idx] - f_los) <= 0.5 * delta_nu + 1e-9:
            vals[idx] += w_imp / delta_nu
    return vals


def doppler_stats(source) -> DopplerStats:
    """Spectral moments from either a validated scene or a sampled curve.

    The scene route evaluates the diffuse moments by quadrature on the
    closed-form density; the curve route uses trapezoid moments of the
    samples plus the exact line record.
    """
    if isinstance(source, ValidatedConfig):
        return _stats_from_config(source)
    if isinstance(source, SpectrumCurve):
        return _stats_from_curve(source)
    raise TypeError("expected a ValidatedConfig or SpectrumCurve")


def _stats_from_config(cfg: ValidatedConfig) -> DopplerStats:
    k = cfg.k_factor
    f_los = los_parameters(cfg).f_los
    m1, m2 = doppler_moments(cfg, orders=(1, 2))
    b1 = (k * f_los + m1) / (k + 1.0)
    var_diffuse = m2 - 2.0 * b1 * m1 + b1 * b1
    b2 = math.sqrt(max((k * (f_los - b1) ** 2 + var_diffuse) / (k + 1.0), 0.0))
    nu_min, nu_max = doppler_bounds(cfg)
    return DopplerStats(b_d=nu_max - nu_min, b_1=b1, b_2=b2,
                        nu_min=nu_min, nu_max=nu_max)


def _stats_from_curve(curve: SpectrumCurve) -> DopplerStats:
    nu = curve.nu_grid
    v = curve.values
    total = curve.total_mass
    if not 0.9 < total < 1.1:
        raise RssError(f"curve is not normalized (mass {total:.4f})")
    f_imp, w_imp = curve.los_impulse if curve.los_impulse else (0.0, 0.0)
    m1 = w_imp * f_imp + float(np.trapezoid(nu * v, nu))
    b1 = m1 / total
    var = (w_imp * (f_imp - b1) ** 2
           + float(np.trapezoid((nu - b1) ** 2 * v, nu))) / total
    if "nu_min" in curve.metadata:
        nu_min = curve.metadata["nu_min"]
        nu_max = curve.metadata["nu_max"]
    else:
        nz = np.nonzero(v > 0)[0]
        nu_min = float(nu[nz[0]]) if nz.size else float(nu[0])
        nu_max = float(nu[nz[-1]]) if nz.size else float(nu[-1])
    return DopplerStats(b_d=nu_max - nu_min, b_1=b1, b_2=math.sqrt(max(var, 0.0)),
                        nu_min=nu_min, nu_max=nu_max)


@dataclass(frozen=True)
class SweepPoint:
    """One sweep evaluation; ``error`` is set when the point's scene is invalid."""

    value: float
    stats: Optional[DopplerStats] = None
    curve: Optional[SpectrumCurve] = None
    error: Optional[str] = None


def layout_config(scene: ValidatedConfig, r_l: float, w_r: float,
                  strip_depth: float = 5.0) -> ValidatedConfig:
    """Scene with strips rebuilt from a length ratio and a road width.

    Strips are centered on the origin: x spans +-(r_l * d_los / 2), the near
    edges sit at +-(w_r / 2), and each strip is ``strip_depth`` meters deep.
    """
    d_los = los_parameters(scene).d_los
    half = 0.5 * d_los * r_l
    c1 = 0.5 * w_r
    d2 = -0.5 * w_r
    cfg = ModelConfig(
        tx=VehicleState(scene.x_t, scene.y_t, scene.v_t, scene.gamma_t),
        rx=VehicleState(scene.x_r, scene.y_r, scene.v_r, scene.gamma_r),
        upper=RssRegion(-half, half, c1, c1 + strip_depth),
        lower=RssRegion(-half, half, d2 - strip_depth, d2),
        fc=scene.fc,
        k_factor=scene.k_factor,
    )
    return validate_config(cfg)


def sweep(scene: ValidatedConfig, parameter: str, values: Sequence[float],
          r_l: float = 1.5, w_r: float = 28.0, strip_depth: float = 5.0,
          with_curves: bool = False, curve_points: int = 1024) -> list:
    """Doppler statistics across a strip-length-ratio or road-width sweep.

    Invalid points are reported in-place and the sweep continues.
    """
    if parameter not in ("r_l", "w_r"):
        raise ValueError("parameter must be 'r_l' or 'w_r'")
    out = []
    for val in values:
        rl = val if parameter == "r_l" else r_l
        wr = val if parameter == "w_r" else w_r
        try:
            cfg = layout_config(scene, rl, wr, strip_depth)
            stats = doppler_stats(cfg)
            curve = dpsd(cfg, n=curve_points) if with_curves else None
        except RssError as exc:
            out.append(SweepPoint(value=float(val), error=f"{type(exc).__name__}: {exc}"))
            continue
        out.append(SweepPoint(value=float(val), stats=stats, curve=curve))
    return out
