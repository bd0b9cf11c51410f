"""Hot numeric kernels: fixed-step RK4 traces and exact cell propagation.

Two implementations of each kernel are shipped:

* a numba ``@njit`` version (default when numba imports cleanly), and
* a pure-numpy fallback, selected by setting the environment variable
  ``S2M_NO_NUMBA=1`` before import (or automatically when numba is absent).

Both paths perform the same floating-point operations per element, so results
are identical; only speed differs.  ``benchmarks/bench_kernels.py`` compares
the two.

Kernel families
---------------
``rk4_trace`` / ``rk4_value``
    Classical fixed-step RK4 on the first-order system (psi, psi') for
    -psi'' + V psi = z psi, used for solution traces and point evaluation at
    moderate z.  ``rk4_value`` finishes with one fractional step so arbitrary
    interior points are hit exactly (no interpolation).

``phase_sweep`` / ``certificate_sweep`` / ``propagate_value``
    Propagation through cells on which V is frozen at its exact cell average.
    The constant-coefficient transfer matrix is applied in closed form
    (trig/hyperbolic/Taylor branches), which is exact for the frozen potential
    and has O(h^2) coefficient error uniformly in z -- the property that makes
    K ~ thousands of eigenvalues reachable on a 4096-cell grid.
    ``phase_sweep`` additionally counts Dirichlet-solution zeros exactly
    (rotation count plus a sign test; no angle ODE is integrated) and returns
    the terminal Pruefer angle modulo pi, giving the strictly increasing
    root-counting function used by the eigenvalue solver.
"""

from __future__ import annotations

import math
import os

import numpy as np

_PI = math.pi

# Cells with |tau| h^2 below this use the Taylor branch of the transfer matrix.
_TAYLOR_CUT = 1e-8
# Hyperbolic cells with kappa*h above this factor out exp(kappa h) explicitly.
_EXP_SHIFT = 300.0
# Amplitude renormalisation threshold (phase information is scale invariant).
_RENORM = 1e100

NUMBA_DISABLED = os.environ.get("S2M_NO_NUMBA", "0") not in ("", "0")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via S2M_NO_NUMBA")
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# RK4 on (psi, psi'):  psi'' = (V - z) psi
# ---------------------------------------------------------------------------


def _rk4_trace_core(v2, h, z, psi0, dpsi0, psi_out, dpsi_out):
    """Integrate over n uniform steps; v2 holds 2n+1 staggered V samples.

    Returns 0 on success, 1 once the state leaves [-1e300, 1e300] (overflow
    or NaN); callers translate that into an overflow error.
    """
    n = (v2.shape[0] - 1) // 2
    psi = psi0
    dpsi = dpsi0
    psi_out[0] = psi
    dpsi_out[0] = dpsi
    for i in range(n):
        v0 = v2[2 * i]
        vm = v2[2 * i + 1]
        v1 = v2[2 * i + 2]
        k1p = dpsi
        k1q = (v0 - z) * psi
        p = psi + 0.5 * h * k1p
        q = dpsi + 0.5 * h * k1q
        k2p = q
        k2q = (vm - z) * p
        p = psi + 0.5 * h * k2p
        q = dpsi + 0.5 * h * k2q
        k3p = q
        k3q = (vm - z) * p
        p = psi + h * k3p
        q = dpsi + h * k3q
        k4p = q
        k4q = (v1 - z) * p
        psi = psi + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        dpsi = dpsi + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        psi_out[i + 1] = psi
        dpsi_out[i + 1] = dpsi
        if not (abs(psi) < 1e300 and abs(dpsi) < 1e300):
            return 1
    return 0


def _rk4_value_core(v2, h, z, nfull, v3, hlast):
    """RK4 over nfull whole cells, then one fractional step of width hlast.

    v3 supplies the three staggered V samples of the fractional step.
    Returns (psi, dpsi, status).
    """
    psi = 0.0
    dpsi = 1.0
    for i in range(nfull):
        v0 = v2[2 * i]
        vm = v2[2 * i + 1]
        v1 = v2[2 * i + 2]
        k1p = dpsi
        k1q = (v0 - z) * psi
        p = psi + 0.5 * h * k1p
        q = dpsi + 0.5 * h * k1q
        k2p = q
        k2q = (vm - z) * p
        p = psi + 0.5 * h * k2p
        q = dpsi + 0.5 * h * k2q
        k3p = q
        k3q = (vm - z) * p
        p = psi + h * k3p
        q = dpsi + h * k3q
        k4p = q
        k4q = (v1 - z) * p
        psi = psi + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        dpsi = dpsi + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        if not (abs(psi) < 1e300 and abs(dpsi) < 1e300):
            return psi, dpsi, 1
    if hlast > 0.0:
        v0 = v3[0]
        vm = v3[1]
        v1 = v3[2]
        k1p = dpsi
        k1q = (v0 - z) * psi
        p = psi + 0.5 * hlast * k1p
        q = dpsi + 0.5 * hlast * k1q
        k2p = q
        k2q = (vm - z) * p
        p = psi + 0.5 * hlast * k2p
        q = dpsi + 0.5 * hlast * k2q
        k3p = q
        k3q = (vm - z) * p
        p = psi + hlast * k3p
        q = dpsi + hlast * k3q
        k4p = q
        k4q = (v1 - z) * p
        psi = psi + (hlast / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        dpsi = dpsi + (hlast / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        if not (abs(psi) < 1e300 and abs(dpsi) < 1e300):
            return psi, dpsi, 1
    return psi, dpsi, 0


# ---------------------------------------------------------------------------
# Exact constant-cell transfer.  For tau = z - vbar,
#   psi_new  = C psi + S psi'
#   psi'_new = -tau S psi + C psi'
# with (C, S) = (cos(w h), sin(w h)/w), (cosh(k h), sinh(k h)/k) or a Taylor
# branch.  C^2 + tau S^2 == 1, so the map is exactly Wronskian preserving.
# ---------------------------------------------------------------------------


def _phase_sweep_scalar(vavg, h, zs, counts, deltas):
    """Zero count in (a, b] and terminal angle mod pi, per z.

    The count uses the whole-rotation part n0 = floor(w h / pi) of each
    oscillatory cell plus a parity sign test; both are exact for the frozen
    potential, so count*pi + delta is a continuous, strictly increasing
    function of z (the discrete Pruefer angle at b).
    """
    ncell = vavg.shape[0]
    nz = zs.shape[0]
    for j in range(nz):
        z = zs[j]
        psi = 0.0
        dpsi = 1.0
        m = 0
        for i in range(ncell):
            tau = z - vavg[i]
            ath = abs(tau) * h * h
            n0 = 0
            if ath < _TAYLOR_CUT:
                t2 = tau * h * h
                c = 1.0 - t2 / 2.0 + t2 * t2 / 24.0
                s = h * (1.0 - t2 / 6.0 + t2 * t2 / 120.0)
            elif tau > 0.0:
                w = math.sqrt(tau)
                wh = w * h
                c = math.cos(wh)
                s = math.sin(wh) / w
                n0 = int(wh / _PI)
            else:
                k = math.sqrt(-tau)
                kh = k * h
                if kh > _EXP_SHIFT:
                    # drop the exp(kh) factor: pure rescale, phase unchanged
                    em = math.exp(-2.0 * kh)
                    c = (1.0 + em) * 0.5
                    s = (1.0 - em) * 0.5 / k
                else:
                    c = math.cosh(kh)
                    s = math.sinh(kh) / k
            pn = c * psi + s * dpsi
            dn = -tau * s * psi + c * dpsi
            if psi != 0.0:
                sgn = 1.0 if n0 % 2 == 0 else -1.0
                if sgn * psi * pn <= 0.0:
                    m += n0 + 1
                else:
                    m += n0
            else:
                m += n0
            psi = pn
            dpsi = dn
            a = abs(psi)
            b = abs(dpsi)
            if a > _RENORM or b > _RENORM:
                psi *= 1e-100
                dpsi *= 1e-100
        # Terminal angle mod pi.  psi == 0 means the endpoint zero was already
        # counted (the sign test uses <=), so delta is exactly 0.  For tiny
        # |psi| the atan2 may round to pi itself; keep it -- counts*pi + delta
        # is then the correctly rounded Theta(b).
        if psi == 0.0:
            d = 0.0
        else:
            d = math.atan2(psi, dpsi)
            if d < 0.0:
                d += _PI
        counts[j] = m
        deltas[j] = d
    return 0


def _certificate_sweep_scalar(vavg, h, zs, residuals):
    """Relative endpoint residual |psi(b)| / max_x |psi(x)| per z.

    Amplitudes are tracked in log space so strongly non-oscillatory regions
    cannot overflow.
    """
    ncell = vavg.shape[0]
    nz = zs.shape[0]
    for j in range(nz):
        z = zs[j]
        psi = 0.0
        dpsi = 1.0
        logscale = 0.0
        maxlog = -1e308
        for i in range(ncell):
            tau = z - vavg[i]
            ath = abs(tau) * h * h
            if ath < _TAYLOR_CUT:
                t2 = tau * h * h
                c = 1.0 - t2 / 2.0 + t2 * t2 / 24.0
                s = h * (1.0 - t2 / 6.0 + t2 * t2 / 120.0)
            elif tau > 0.0:
                w = math.sqrt(tau)
                wh = w * h
                c = math.cos(wh)
                s = math.sin(wh) / w
            else:
                k = math.sqrt(-tau)
                kh = k * h
                if kh > _EXP_SHIFT:
                    em = math.exp(-2.0 * kh)
                    c = (1.0 + em) * 0.5
                    s = (1.0 - em) * 0.5 / k
                    logscale += kh
                else:
                    c = math.cosh(kh)
                    s = math.sinh(kh) / k
            pn = c * psi + s * dpsi
            dn = -tau * s * psi + c * dpsi
            psi = pn
            dpsi = dn
            if psi != 0.0:
                l = math.log(abs(psi)) + logscale
                if l > maxlog:
                    maxlog = l
            a = abs(psi)
            b = abs(dpsi)
            if a > _RENORM or b > _RENORM:
                psi *= 1e-100
                dpsi *= 1e-100
                logscale += math.log(1e100)
        if psi == 0.0:
            residuals[j] = 0.0
        else:
            e = math.log(abs(psi)) + logscale - maxlog
            if e > 700.0:
                e = 700.0
            residuals[j] = math.exp(e)
    return 0


def _propagate_value_scalar(vavg, h, z, nfull, vlast, hlast):
    """Exact-cell propagation from the anchor to an interior point.

    Returns (psi, dpsi, logscale): true values are exp(logscale) times the
    returned pair.  Usable at arbitrarily negative z.
    """
    psi = 0.0
    dpsi = 1.0
    logscale = 0.0
    for i in range(nfull + 1):
        if i < nfull:
            vv = vavg[i]
            hh = h
        else:
            vv = vlast
            hh = hlast
            if hh <= 0.0:
                break
        tau = z - vv
        ath = abs(tau) * hh * hh
        if ath < _TAYLOR_CUT:
            t2 = tau * hh * hh
            c = 1.0 - t2 / 2.0 + t2 * t2 / 24.0
            s = hh * (1.0 - t2 / 6.0 + t2 * t2 / 120.0)
        elif tau > 0.0:
            w = math.sqrt(tau)
            c = math.cos(w * hh)
            s = math.sin(w * hh) / w
        else:
            k = math.sqrt(-tau)
            kh = k * hh
            if kh > _EXP_SHIFT:
                em = math.exp(-2.0 * kh)
                c = (1.0 + em) * 0.5
                s = (1.0 - em) * 0.5 / k
                logscale += kh
            else:
                c = math.cosh(kh)
                s = math.sinh(kh) / k
        pn = c * psi + s * dpsi
        dn = -tau * s * psi + c * dpsi
        psi = pn
        dpsi = dn
        a = abs(psi)
        b = abs(dpsi)
        if a > _RENORM or b > _RENORM:
            psi *= 1e-100
            dpsi *= 1e-100
            logscale += math.log(1e100)
    return psi, dpsi, logscale


# ---------------------------------------------------------------------------
# Pure-numpy fallbacks (vectorised over the z batch per cell)
# ---------------------------------------------------------------------------


def _cell_coeffs_numpy(tau, h):
    """Vectorised (C, S, n0, logshift) for one cell across a z batch."""
    nz = tau.shape[0]
    c = np.empty(nz)
    s = np.empty(nz)
    n0 = np.zeros(nz, dtype=np.int64)
    logshift = np.zeros(nz)
    ath = np.abs(tau) * h * h
    small = ath < _TAYLOR_CUT
    osc = (tau > 0.0) & ~small
    hyp = (tau < 0.0) & ~small
    if osc.any():
        w = np.sqrt(tau[osc])
        wh = w * h
        c[osc] = np.cos(wh)
        s[osc] = np.sin(wh) / w
        n0[osc] = (wh / _PI).astype(np.int64)
    if hyp.any():
        k = np.sqrt(-tau[hyp])
        kh = k * h
        big = kh > _EXP_SHIFT
        em = np.exp(-2.0 * kh)
        ekh = np.exp(np.minimum(kh, _EXP_SHIFT))
        fac = np.where(big, 1.0, ekh)
        c[hyp] = fac * (1.0 + em) * 0.5
        s[hyp] = fac * (1.0 - em) * 0.5 / k
        ls = np.zeros(kh.shape[0])
        ls[big] = kh[big]
        logshift[hyp] = ls
    if small.any():
        t2 = tau[small] * h * h
        c[small] = 1.0 - t2 / 2.0 + t2 * t2 / 24.0
        s[small] = h * (1.0 - t2 / 6.0 + t2 * t2 / 120.0)
    return c, s, n0, logshift


def _phase_sweep_numpy(vavg, h, zs, counts, deltas):
    nz = zs.shape[0]
    psi = np.zeros(nz)
    dpsi = np.ones(nz)
    m = np.zeros(nz, dtype=np.int64)
    for i in range(vavg.shape[0]):
        tau = zs - vavg[i]
        c, s, n0, _ = _cell_coeffs_numpy(tau, h)
        pn = c * psi + s * dpsi
        dn = -tau * s * psi + c * dpsi
        sgn = np.where(n0 % 2 == 0, 1.0, -1.0)
        cross = (psi != 0.0) & (sgn * psi * pn <= 0.0)
        m += n0 + cross
        psi = pn
        dpsi = dn
        amp = np.maximum(np.abs(psi), np.abs(dpsi))
        mask = amp > _RENORM
        if mask.any():
            psi[mask] *= 1e-100
            dpsi[mask] *= 1e-100
    d = np.arctan2(psi, dpsi)
    d = np.where(d < 0.0, d + _PI, d)
    d = np.where(psi == 0.0, 0.0, d)
    counts[:] = m
    deltas[:] = d
    return 0


def _certificate_sweep_numpy(vavg, h, zs, residuals):
    nz = zs.shape[0]
    psi = np.zeros(nz)
    dpsi = np.ones(nz)
    logscale = np.zeros(nz)
    maxlog = np.full(nz, -1e308)
    for i in range(vavg.shape[0]):
        tau = zs - vavg[i]
        c, s, _, logshift = _cell_coeffs_numpy(tau, h)
        pn = c * psi + s * dpsi
        dn = -tau * s * psi + c * dpsi
        psi = pn
        dpsi = dn
        logscale += logshift
        nzmask = psi != 0.0
        if nzmask.any():
            l = np.log(np.abs(psi[nzmask])) + logscale[nzmask]
            maxlog[nzmask] = np.maximum(maxlog[nzmask], l)
        amp = np.maximum(np.abs(psi), np.abs(dpsi))
        mask = amp > _RENORM
        if mask.any():
            psi[mask] *= 1e-100
            dpsi[mask] *= 1e-100
            logscale[mask] += math.log(1e100)
    res = np.zeros(nz)
    nzmask = psi != 0.0
    e = np.log(np.abs(psi[nzmask])) + logscale[nzmask] - maxlog[nzmask]
    res[nzmask] = np.exp(np.minimum(e, 700.0))
    residuals[:] = res
    return 0


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:
    _rk4_trace_numba = njit(cache=True, nogil=True)(_rk4_trace_core)
    _rk4_value_numba = njit(cache=True, nogil=True)(_rk4_value_core)
    _phase_sweep_numba = njit(cache=True, nogil=True)(_phase_sweep_scalar)
    _certificate_sweep_numba = njit(cache=True, nogil=True)(_certificate_sweep_scalar)
    _propagate_value_numba = njit(cache=True, nogil=True)(_propagate_value_scalar)
else:
    _rk4_trace_numba = None
    _rk4_value_numba = None
    _phase_sweep_numba = None
    _certificate_sweep_numba = None
    _propagate_value_numba = None


def rk4_trace(v2, h, z, psi0, dpsi0, psi_out, dpsi_out, force_numpy=False):
    if NUMBA_AVAILABLE and not force_numpy:
        return _rk4_trace_numba(v2, h, z, psi0, dpsi0, psi_out, dpsi_out)
    return _rk4_trace_core(v2, h, z, psi0, dpsi0, psi_out, dpsi_out)


def rk4_value(v2, h, z, nfull, v3, hlast, force_numpy=False):
    if NUMBA_AVAILABLE and not force_numpy:
        return _rk4_value_numba(v2, h, z, nfull, v3, hlast)
    return _rk4_value_core(v2, h, z, nfull, v3, hlast)


def phase_sweep(vavg, h, zs, force_numpy=False):
    """Root-counting function Theta(b; z) = counts*pi + deltas, batched in z."""
    zs = np.ascontiguousarray(zs, dtype=np.float64)
    counts = np.empty(zs.shape[0], dtype=np.int64)
    deltas = np.empty(zs.shape[0])
    if NUMBA_AVAILABLE and not force_numpy:
        _phase_sweep_numba(vavg, h, zs, counts, deltas)
    else:
        _phase_sweep_numpy(vavg, h, zs, counts, deltas)
    return counts, deltas


def certificate_sweep(vavg, h, zs, force_numpy=False):
    """Relative endpoint residuals |psi(b)|/||psi||_inf, batched in z."""
    zs = np.ascontiguousarray(zs, dtype=np.float64)
    residuals = np.empty(zs.shape[0])
    if NUMBA_AVAILABLE and not force_numpy:
        _certificate_sweep_numba(vavg, h, zs, residuals)
    else:
        _certificate_sweep_numpy(vavg, h, zs, residuals)
    return residuals


def propagate_value(vavg, h, z, nfull, vlast, hlast, force_numpy=False):
    """Scaled (psi, dpsi, logscale) at an interior point; overflow free."""
    if NUMBA_AVAILABLE and not force_numpy:
        return _propagate_value_numba(vavg, h, float(z), nfull, vlast, hlast)
    return _propagate_value_scalar(vavg, h, float(z), nfull, vlast, hlast)
