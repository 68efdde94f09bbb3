"""Monte Carlo ground truth: scatterer draws, channel gains, estimators, tests.

Random draws use counter-based Philox streams keyed by (seed, stream id), so
the upper-strip, lower-strip, and phase draws are independent and the whole
pipeline is reproducible regardless of evaluation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.stats as _st

from . import _kernels
from .errors import ConstraintViolation, DegenerateBins, InsufficientLength
from .geometry import ValidatedConfig, doppler_of_points, los_parameters
from .spectrum import SpectrumCurve

_STREAM_UPPER = 1
_STREAM_LOWER = 2
_STREAM_PHASE = 3


def _stream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream_id)]))


@dataclass(frozen=True)
class ScattererSet:
    """Scatterer draw with the per-strip allocation that keeps density equal."""

    points: np.ndarray
    n_upper: int
    n_lower: int
    seed: int


@dataclass(frozen=True)
class GainSeries:
    """Complex channel gain samples with their provenance."""

    samples: np.ndarray
    fs: float
    duration: float
    n_scatterers: int
    seed: int


@dataclass(frozen=True)
class HistogramEstimate:
    """Averaged normalized histogram (1-D or 2-D)."""

    edges: tuple
    density: np.ndarray
    counts: np.ndarray
    n_total: int
    reps: int
    zero_mask: np.ndarray = field(repr=False)

    @property
    def m_total(self) -> int:
        return int(self.density.size)

    @property
    def m_nonzero(self) -> int:
        return int(np.count_nonzero(~self.zero_mask))

    @property
    def bin_areas(self) -> np.ndarray:
        if len(self.edges) == 1:
            return np.diff(self.edges[0])
        w1 = np.diff(self.edges[0])[:, None]
        w2 = np.diff(self.edges[1])[None, :]
        return w1 * w2

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * self.bin_areas))


@dataclass(frozen=True)
class GofReport:
    """Chi-square goodness-of-fit outcome."""

    z: float
    dof: int
    z_alpha: float
    accept: bool
    mse: float
    pooled_bins: int
    p_value: float


def sample_scatterers(cfg: ValidatedConfig, n: int, seed: int = 0) -> ScattererSet:
    """Draw ``n`` scatterers uniformly over the two strips.

    The upper strip receives floor(n * A1 / A) points so both strips share
    one average density.
    """
    if n < 1:
        raise ValueError("need at least one scatterer")
    n1 = int(n * cfg.area1 / cfg.area)
    n2 = n - n1
    g1 = _stream(seed, _STREAM_UPPER)
    g2 = _stream(seed, _STREAM_LOWER)
    pts = np.empty((n, 2))
    pts[:n1, 0] = g1.uniform(cfg.a1, cfg.b1, n1)
    pts[:n1, 1] = g1.uniform(cfg.c1, cfg.d1, n1)
    pts[n1:, 0] = g2.uniform(cfg.a2, cfg.b2, n2)
    pts[n1:, 1] = g2.uniform(cfg.c2, cfg.d2, n2)
    return ScattererSet(points=pts, n_upper=n1, n_lower=n2, seed=seed)


def doppler_samples(cfg: ValidatedConfig, sset: ScattererSet) -> np.ndarray:
    """Doppler shift of every scatterer in the set."""
    return doppler_of_points(cfg, sset.points[:, 0], sset.points[:, 1])


def gain_series(cfg: ValidatedConfig, n: int, duration: float,
                fs: Optional[float] = None, seed: int = 0) -> GainSeries:
    """Simulate the normalized channel gain as a sum of random cisoids.

    Path gains are 1/sqrt(n); phases are i.i.d. uniform on (-pi, pi]. The
    deterministic direct-path term is added only when K > 0.
    """
    if fs is None:
        fs = 8.0 * cfg.f_dmax
    if fs < 2.0 * cfg.f_dmax:
        raise ConstraintViolation(
            f"sampling rate {fs:.1f} Hz below twice the Doppler limit {cfg.f_dmax:.1f} Hz")
    sset = sample_scatterers(cfg, n, seed)
    freqs = doppler_samples(cfg, sset)
    phases = _stream(seed, _STREAM_PHASE).uniform(-math.pi, math.pi, n)
    n_samp = int(round(duration * fs))
    t = np.arange(n_samp) / fs
    k = cfg.k_factor
    diffuse = _kernels.cisoid_sum(freqs, phases, t) / math.sqrt(n)
    h = math.sqrt(1.0 / (k + 1.0)) * diffuse
    if k > 0:
        los = los_parameters(cfg)
        h = h + math.sqrt(k / (k + 1.0)) * np.exp(
            1j * (2.0 * math.pi * los.f_los * t - 2.0 * math.pi * los.d_los / cfg.lam))
    return GainSeries(samples=h, fs=fs, duration=duration, n_scatterers=n, seed=seed)


def _biased_acf(x: np.ndarray, lags: int) -> np.ndarray:
    nf = 1
    while nf < 2 * x.size:
        nf *= 2
    spec = np.fft.fft(x, nf)
    acf = np.fft.ifft(spec * np.conj(spec))[:lags] / x.size
    return acf


def estimate_dpsd(series: Sequence[GainSeries], nfft: int) -> SpectrumCurve:
    """Correlation-then-transform spectral estimate, averaged over realizations.

    Biased autocorrelation with a rectangular window truncated at a quarter
    of the series length (capped at nfft // 2 lags), transformed on an
    ``nfft``-point grid, clipped to non-negative values, and normalized to
    unit area.
    """
    if not series:
        raise ValueError("need at least one gain series")
    fs = series[0].fs
    if any(abs(s.fs - fs) > 1e-9 for s in series):
        raise ValueError("all series must share one sampling rate")
    n = min(s.samples.size for s in series)
    if n < nfft:
        raise InsufficientLength(
            f"series length {n} is shorter than the requested {nfft} lags")
    lags = min(n // 4, nfft // 2)
    acf = np.zeros(lags, dtype=complex)
    for s in series:
        acf += _biased_acf(s.samples[:n], lags)
    acf /= len(series)

    c = np.zeros(nfft, dtype=complex)
    c[0] = acf[0]
    c[1:lags] = acf[1:]
    c[nfft - lags + 1:] = np.conj(acf[1:][::-1])
    spec = np.fft.fftshift(np.real(np.fft.fft(c))) / fs
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft, d=1.0 / fs))
    spec = np.clip(spec, 0.0, None)
    area = np.sum(spec) * (freqs[1] - freqs[0])
    if area > 0:
        spec = spec / area
    meta = {"fs": fs, "lags": lags, "averages": len(series), "nfft": nfft,
            "estimator": "biased-acf rectangular window"}
    return SpectrumCurve(nu_grid=freqs, values=spec, los_impulse=None, metadata=meta)


def estimate_histogram(samples, edges, reps: Optional[int] = None) -> HistogramEstimate:
    """Averaged normalized histogram over independent repetitions.

    ``samples`` is one array (single repetition) or a list of arrays.  For
    2-D input each repetition is an (n, 2) array and ``edges`` a pair of
    edge vectors.  Zero bins are flagged for display exclusion but keep
    their place in the mass accounting.
    """
    if isinstance(samples, np.ndarray):
        samples = [samples]
    if reps is not None and reps != len(samples):
        raise ValueError("reps disagrees with the number of sample arrays")
    two_d = isinstance(edges, (tuple, list)) and len(edges) == 2 and np.ndim(edges[0]) == 1
    if two_d:
        e1 = np.asarray(edges[0], dtype=float)
        e2 = np.asarray(edges[1], dtype=float)
        density = np.zeros((e1.size - 1, e2.size - 1))
        counts = np.zeros_like(density)
        areas = np.diff(e1)[:, None] * np.diff(e2)[None, :]
        n_total = 0
        for rep in samples:
            rep = np.asarray(rep)
            h, _, _ = np.histogram2d(rep[:, 0], rep[:, 1], bins=(e1, e2))
            m = h.sum()
            if m == 0:
                raise ValueError("a repetition has no samples inside the bin range")
            density += h / (m * areas)
            counts += h
            n_total += int(m)
        density /= len(samples)
        edges_out = (e1, e2)
    else:
        e1 = np.asarray(edges, dtype=float)
        density = np.zeros(e1.size - 1)
        counts = np.zeros_like(density)
        widths = np.diff(e1)
        n_total = 0
        for rep in samples:
            h, _ = np.histogram(np.asarray(rep), bins=e1)
            m = h.sum()
            if m == 0:
                raise ValueError("a repetition has no samples inside the bin range")
            density += h / (m * widths)
            counts += h
            n_total += int(m)
        density /= len(samples)
        edges_out = (e1,)
    return HistogramEstimate(edges=edges_out, density=density, counts=counts,
                             n_total=n_total, reps=len(samples),
                             zero_mask=counts == 0)


def _pool(counts: np.ndarray, expected: np.ndarray, floor: float):
    order = np.argsort(expected)[::-1]
    pooled_o, pooled_e = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += counts[i]
        acc_e += expected[i]
        if acc_e >= floor:
            pooled_o.append(acc_o)
            pooled_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        if pooled_e:
            pooled_o[-1] += acc_o
            pooled_e[-1] += acc_e
        else:
            pooled_o.append(acc_o)
            pooled_e.append(acc_e)
    return np.array(pooled_o), np.array(pooled_e)


def chi_square_test(hist: HistogramEstimate, expected, p: float = 0.05,
                    min_expected: float = 5.0) -> GofReport:
    """Chi-square test of a histogram against analytic bin probabilities.

    ``expected`` is an array of per-bin probabilities matching the histogram
    layout.  Bins are pooled (largest expected first) until each pool meets
    the minimum expected count.
    """
    exp_p = np.asarray(expected, dtype=float).reshape(-1)
    counts = hist.counts.reshape(-1)
    if exp_p.shape != counts.shape:
        raise ValueError("expected probabilities do not match the histogram bins")
    n = hist.n_total
    exp_counts = exp_p * n

    obs_pool, exp_pool = _pool(counts, exp_counts, min_expected)
    if exp_pool.size < 2:
        raise DegenerateBins(
            f"only {exp_pool.size} pooled bin(s) reach the expected-count floor {min_expected}")
    # mass outside the supplied bins (if any) is ignored on both sides
    z = float(np.sum((obs_pool - exp_pool) ** 2 / exp_pool))
    dof = exp_pool.size - 1
    z_alpha = float(_st.chi2.ppf(1.0 - p, dof))
    areas = hist.bin_areas.reshape(-1)
    mse = float(np.mean((hist.density.reshape(-1) - exp_p / areas) ** 2))
    return GofReport(z=z, dof=dof, z_alpha=z_alpha, accept=z <= z_alpha,
                     mse=mse, pooled_bins=exp_pool.size,
                     p_value=float(_st.chi2.sf(z, dof)))


# ---------------------------------------------------------------------------
# exact expected-mass oracles used to calibrate the tests


def _clip_halfplane(poly, nx, ny, c):
    """Keep the part of a polygon with nx*x + ny*y >= c."""
    out = []
    m = len(poly)
    for i in range(m):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % m]
        fa = nx * ax + ny * ay - c
        fb = nx * bx + ny * by - c
        if fa >= 0:
            out.append((ax, ay))
        if (fa > 0 > fb) or (fa < 0 < fb):
            t = fa / (fa - fb)
            out.append((ax + t * (bx - ax), ay + t * (by - ay)))
    return out


def _poly_area(poly) -> float:
    if len(poly) < 3:
        return 0.0
    a = 0.0
    m = len(poly)
    for i in range(m):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % m]
        a += x1 * y2 - x2 * y1
    return 0.5 * abs(a)


def angle_box_mass(cfg: ValidatedConfig, alpha_box, beta_box) -> float:
    """Exact probability of the angle pair falling in a rectangular box.

    Computed in scene coordinates: the box preimage is the intersection of
    two ray wedges with the strips, a polygon whose area is exact.  Valid
    for boxes narrower than pi in each angle.
    """
    a1, a2 = alpha_box
    b1, b2 = beta_box
    if not (0 < a2 - a1 < math.pi and 0 < b2 - b1 < math.pi):
        raise ValueError("box must be non-empty and narrower than pi")
    area = 0.0
    for rect in (((cfg.a1, cfg.c1), (cfg.b1, cfg.c1), (cfg.b1, cfg.d1), (cfg.a1, cfg.d1)),
                 ((cfg.a2, cfg.c2), (cfg.b2, cfg.c2), (cfg.b2, cfg.d2), (cfg.a2, cfg.d2))):
        poly = list(rect)
        # alpha >= a1: left of the departure ray at a1, i.e. cross(d, p-t) >= 0
        for (ox, oy, ang, sign) in ((cfg.x_t, cfg.y_t, a1, 1.0), (cfg.x_t, cfg.y_t, a2, -1.0),
                                    (cfg.x_r, cfg.y_r, b1, 1.0), (cfg.x_r, cfg.y_r, b2, -1.0)):
            dx, dy = math.cos(ang), math.sin(ang)
            # sign * (dx*(y-oy) - dy*(x-ox)) >= 0
            nx = -sign * dy
            ny = sign * dx
            c = nx * ox + ny * oy
            poly = _clip_halfplane(poly, nx, ny, c)
            if not poly:
                break
        area += _poly_area(poly)
    return area / cfg.area


_GLM_NODES, _GLM_WEIGHTS = np.polynomial.legendre.leggauss(48)


def doppler_box_mass(cfg: ValidatedConfig, nu_box, beta_box) -> float:
    """Probability of (Doppler, arrival angle) falling in a rectangular box.

    Integrates the closed-form angle density over the box preimage: for each
    arrival angle the strip chord is cut down to departure angles whose
    Doppler lies in the box, which is an interval by monotonicity.
    """
    from .analytic_pdf import _chord_scalar, _edge_data, _ccw
    from .geometry import geometry_constants

    nu1, nu2 = nu_box
    b1, b2 = beta_box
    geo = geometry_constants(cfg)
    jac_scale = (cfg.x_t - cfg.x_r) ** 2 / cfg.area
    total = 0.0
    for region, rect in ((1, ((cfg.a1, cfg.c1), (cfg.b1, cfg.c1), (cfg.b1, cfg.d1), (cfg.a1, cfg.d1))),
                         (2, ((cfg.a2, cfg.c2), (cfg.b2, cfg.c2), (cfg.b2, cfg.d2), (cfg.a2, cfg.d2)))):
        poly = _ccw(rect)
        edges = _edge_data(poly, cfg.x_r, cfg.y_r)
        branch = 1.0 if region == 1 else -1.0
        half_b = 0.5 * (b2 - b1)
        mid_b = 0.5 * (b1 + b2)
        for wb, xb in zip(_GLM_WEIGHTS, _GLM_NODES):
            beta = mid_b + half_b * xb
            chord = _chord_scalar(edges, cfg.x_r, cfg.y_r, beta)
            if chord is None:
                continue
            x1, y1, x2, y2 = chord
            al1 = math.atan2(y1 - cfg.y_t, x1 - cfg.x_t)
            al2 = math.atan2(y2 - cfg.y_t, x2 - cfg.x_t)
            a_lo, a_hi = (al1, al2) if al1 <= al2 else (al2, al1)
            # cut the chord down to departure angles whose Doppler is in the box
            f_r = cfg.f_rmax * math.cos(beta - cfg.gamma_r)
            cuts = [a_lo, a_hi]
            for nu_edge in (nu1, nu2):
                zz = (nu_edge - f_r) / cfg.f_tmax
                if -1.0 <= zz <= 1.0:
                    cuts.append(branch * math.acos(zz) + cfg.gamma_t)
            lo, hi = a_lo, a_hi
            segs = []
            pts = sorted(c for c in cuts if lo <= c <= hi)
            for sa, sb in zip(pts[:-1], pts[1:]):
                mid = 0.5 * (sa + sb)
                nu_mid = (cfg.f_tmax * math.cos(mid - cfg.gamma_t) + f_r)
                if nu1 <= nu_mid <= nu2:
                    segs.append((sa, sb))
            for sa, sb in segs:
                half_a = 0.5 * (sb - sa)
                mid_a = 0.5 * (sa + sb)
                alphas = mid_a + half_a * _GLM_NODES
                s = np.sin(alphas - beta)
                s = np.where(s == 0.0, 1.0, s)
                dens = jac_scale * np.abs(
                    (1.0 / s**3)
                    * (np.sin(alphas) - geo.m_los * np.cos(alphas))
                    * (math.sin(beta) - geo.m_los * math.cos(beta)))
                inner = half_a * float(np.dot(_GLM_WEIGHTS, dens))
                total += wb * half_b * inner
    return total
