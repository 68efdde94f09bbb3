"""Hot numeric kernels.

Two implementations live side by side: numba-compiled versions and pure
numpy fallbacks.  Selection is automatic (numba if importable) and can be
forced to the numpy path with ``RSS_DISABLE_NUMBA=1``.  Both paths are kept
importable so the benchmark can time them against each other.
"""
from __future__ import annotations

import math
import os

import numpy as np

_TWO_PI = 2.0 * math.pi

_disable = os.environ.get("RSS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
try:
    if _disable:
        raise ImportError("numba disabled by RSS_DISABLE_NUMBA")
    from numba import cfunc, njit, types  # noqa: F401
    from scipy import LowLevelCallable
    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False


def _check_uniform(times: np.ndarray) -> float:
    if times.size < 2:
        return 0.0
    steps = np.diff(times)
    dt = float(steps[0])
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise ValueError("cisoid accumulation requires a uniform time grid")
    return dt


def cisoid_sum_numpy(freqs, phases, times):
    """Sum of unit cisoids exp(j(phase_n + 2 pi f_n t)) over n, per time sample.

    Uses a per-scatterer phase-rotation recurrence on the uniform time grid,
    so the inner loop is complex multiplies instead of transcendentals.
    """
    freqs = np.asarray(freqs, dtype=float)
    phases = np.asarray(phases, dtype=float)
    times = np.asarray(times, dtype=float)
    dt = _check_uniform(times)
    z = np.exp(1j * (phases + _TWO_PI * freqs * times[0]))
    w = np.exp(1j * _TWO_PI * freqs * dt)
    out = np.empty(times.size, dtype=complex)
    for k in range(times.size):
        out[k] = z.sum()
        z *= w
    return out


if NUMBA_ENABLED:

    @njit(cache=True)
    def _cisoid_sum_njit(freqs, phases, t0, dt, nt):
        ns = freqs.shape[0]
        out_re = np.zeros(nt)
        out_im = np.zeros(nt)
        for n in range(ns):
            zr = math.cos(phases[n] + _TWO_PI * freqs[n] * t0)
            zi = math.sin(phases[n] + _TWO_PI * freqs[n] * t0)
            wr = math.cos(_TWO_PI * freqs[n] * dt)
            wi = math.sin(_TWO_PI * freqs[n] * dt)
            for k in range(nt):
                out_re[k] += zr
                out_im[k] += zi
                zr, zi = zr * wr - zi * wi, zr * wi + zi * wr
        return out_re + 1j * out_im

    def cisoid_sum_numba(freqs, phases, times):
        freqs = np.ascontiguousarray(freqs, dtype=float)
        phases = np.ascontiguousarray(phases, dtype=float)
        times = np.ascontiguousarray(times, dtype=float)
        dt = _check_uniform(times)
        return _cisoid_sum_njit(freqs, phases, float(times[0]), dt, times.size)

    cisoid_sum = cisoid_sum_numba
else:
    cisoid_sum_numba = None
    cisoid_sum = cisoid_sum_numpy


def _dpdf_integrand_py(t, endpoint, sgn, nu, gamma_t, gamma_r,
                       f_tmax, f_rmax, m_los, scale, branch):
    """Marginal-density integrand after the beta = endpoint + sgn*t^2 map.

    The square-root substitution absorbs the inverse-square-root blowup the
    integrand develops where the transmitter Doppler term saturates, so the
    adaptive rule sees a bounded function.
    """
    beta = endpoint + sgn * t * t
    z = (nu - f_rmax * math.cos(beta - gamma_r)) / f_tmax
    zz = z * z
    if zz >= 1.0:
        return 0.0
    h1 = branch * math.acos(z) + gamma_t
    s = math.sin(h1 - beta)
    if s == 0.0:
        return 0.0
    val = scale * abs(
        (1.0 / (s * s * s)) / math.sqrt(1.0 - zz)
        * (math.sin(h1) - m_los * math.cos(h1))
        * (math.sin(beta) - m_los * math.cos(beta))
    )
    return val * 2.0 * t


if NUMBA_ENABLED:

    @cfunc(types.float64(types.intc, types.CPointer(types.float64)))
    def _dpdf_integrand_c(n, xx):
        t = xx[0]
        beta = xx[1] + xx[2] * t * t
        z = (xx[3] - xx[7] * math.cos(beta - xx[5])) / xx[6]
        zz = z * z
        if zz >= 1.0:
            return 0.0
        h1 = xx[10] * math.acos(z) + xx[4]
        s = math.sin(h1 - beta)
        if s == 0.0:
            return 0.0
        val = xx[9] * abs(
            (1.0 / (s * s * s)) / math.sqrt(1.0 - zz)
            * (math.sin(h1) - xx[8] * math.cos(h1))
            * (math.sin(beta) - xx[8] * math.cos(beta))
        )
        return val * 2.0 * t

    dpdf_integrand = LowLevelCallable(_dpdf_integrand_c.ctypes)
else:
    dpdf_integrand = _dpdf_integrand_py


def joint_doppler_terms_numpy(nu, beta, gamma_t, gamma_r, f_tmax, f_rmax, m_los, scale, branch):
    """Vectorized joint Doppler/arrival density without the support indicator.

    ``branch`` is +1 for upper-strip arrival angles and -1 for lower-strip
    ones.  Returns 0 where the Doppler value is unreachable (|z| >= 1).
    """
    z = (nu - f_rmax * np.cos(beta - gamma_r)) / f_tmax
    ok = np.abs(z) < 1.0
    zc = np.where(ok, z, 0.0)
    h1 = branch * np.arccos(zc) + gamma_t
    s = np.sin(h1 - beta)
    ok &= s != 0.0
    s = np.where(ok, s, 1.0)
    val = scale * np.abs(
        (1.0 / s**3) / np.sqrt(1.0 - zc**2)
        * (np.sin(h1) - m_los * np.cos(h1))
        * (np.sin(beta) - m_los * np.cos(beta))
    )
    return np.where(ok, val, 0.0)
