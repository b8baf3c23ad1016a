"""Compiled inner loops: Hamiltonian action and the Schrodinger integrators.

The drive enters the kernels as the complex amplitude ``amp = (Omega/2) e^{i phi}``
multiplying the lowering operator |0><1| on every atom; its conjugate
multiplies the raising operator.

Two drive encodings are understood:

* ``DRIVE_TABLE``: Omega and Delta piecewise linear on ``grid``; phi constant
  on each grid interval.  Integration restarts at every grid point so kinks
  and phase jumps never fall inside a step.
* ``DRIVE_CD``: the analytic counterdiabatic drive, parameters packed in
  ``cd = [delta_i, delta_f, t_f, omega_max, kappa, t1_eff, t2_eff]``.
"""
import math

import numpy as np
from numba import njit

DRIVE_TABLE = 0
DRIVE_CD = 1

METHOD_BS32 = 0
METHOD_RK2 = 1

STATUS_OK = 0
STATUS_UNDERFLOW = 1

_SAFETY = 0.8
_PI_ALPHA = 0.7 / 3.0
_PI_BETA = 0.4 / 3.0
_FAC_MIN = 0.2
_FAC_MAX = 5.0


@njit(cache=True)
def apply_h(psi, amp, delta, diag_n, diag_v, hi, lo, out):
    for k in range(psi.size):
        out[k] = (diag_v[k] - delta * diag_n[k]) * psi[k]
    amp_c = amp.conjugate()
    for p in range(hi.size):
        h = hi[p]
        l = lo[p]
        out[l] += amp * psi[h]
        out[h] += amp_c * psi[l]


@njit(cache=True)
def _rhs(psi, amp, delta, diag_n, diag_v, hi, lo, out):
    # out = -i H psi
    apply_h(psi, amp, delta, diag_n, diag_v, hi, lo, out)
    for k in range(out.size):
        out[k] = -1j * out[k]


@njit(cache=True)
def cd_point(t, cd):
    """Return (omega_ad, domega_ad, delta_ad, ddelta_ad, omega_cd) at time t."""
    delta_i, delta_f, t_f, omega_max, kappa, t1, t2 = cd[0], cd[1], cd[2], cd[3], cd[4], cd[5], cd[6]
    w = math.pi / t_f
    s = math.sin(w * min(t, t_f - t))
    c = math.cos(w * t)
    u = 0.5 * math.pi * s
    om = kappa * omega_max * math.sin(u) ** 2
    dom = kappa * omega_max * math.sin(2.0 * u) * 0.5 * math.pi * c * w
    de = 0.5 * (delta_i + delta_f) + 0.5 * (delta_i - delta_f) * c
    dde = -0.5 * (delta_i - delta_f) * s * w
    num = om * dde - dom * de + dom * t1
    den = om * om + de * de - 2.0 * de * t1 + t2
    return om, dom, de, dde, num / den


@njit(cache=True)
def _drive(t, seg, kind, grid, om_v, de_v, ph_v, cd):
    if kind == DRIVE_CD:
        om, dom, de, dde, ocd = cd_point(t, cd)
        return 0.5 * (om + 1j * ocd), de
    t0 = grid[seg]
    t1 = grid[seg + 1]
    w = (t - t0) / (t1 - t0)
    om = om_v[seg] + w * (om_v[seg + 1] - om_v[seg])
    de = de_v[seg] + w * (de_v[seg + 1] - de_v[seg])
    ph = ph_v[seg]
    return 0.5 * om * (math.cos(ph) + 1j * math.sin(ph)), de


@njit(cache=True)
def _norm(v):
    s = 0.0
    for k in range(v.size):
        s += v[k].real * v[k].real + v[k].imag * v[k].imag
    return math.sqrt(s)


@njit(cache=True)
def propagate(psi0, kind, grid, om_v, de_v, ph_v, cd, diag_n, diag_v, hi, lo,
              method, rtol, atol, max_step, h_min):
    """Integrate i dpsi/dt = H(t) psi over [grid[0], grid[-1]].

    Returns (psi, steps, rejected, max_norm_drift, status).
    """
    n = psi0.size
    y = psi0.copy()
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    yn = np.empty(n, np.complex128)
    steps = 0
    rejected = 0
    drift = abs(_norm(y) - 1.0)
    n_seg = grid.size - 1
    h = 0.0
    for seg in range(n_seg):
        t = grid[seg]
        t_end = grid[seg + 1]
        span = t_end - t
        if span <= 0.0:
            continue
        amp, de = _drive(t, seg, kind, grid, om_v, de_v, ph_v, cd)
        _rhs(y, amp, de, diag_n, diag_v, hi, lo, k1)

        if method == METHOD_RK2:
            n_steps = max(1, int(math.ceil(span / max_step - 1e-9)))
            h = span / n_steps
            for i in range(n_steps):
                ti = t + i * h
                if i > 0:
                    amp, de = _drive(ti, seg, kind, grid, om_v, de_v, ph_v, cd)
                    _rhs(y, amp, de, diag_n, diag_v, hi, lo, k1)
                for k in range(n):
                    tmp[k] = y[k] + 0.5 * h * k1[k]
                amp, de = _drive(ti + 0.5 * h, seg, kind, grid, om_v, de_v, ph_v, cd)
                _rhs(tmp, amp, de, diag_n, diag_v, hi, lo, k2)
                for k in range(n):
                    y[k] = y[k] + h * k2[k]
                steps += 1
                d = abs(_norm(y) - 1.0)
                if d > drift:
                    drift = d
            continue

        # Bogacki-Shampine 3(2), FSAL, local extrapolation, PI step control
        if h <= 0.0:
            d1 = _norm(k1)
            h = 0.01 * _norm(y) / d1 if d1 > 1e-5 else 1e-6
        err_prev = 1.0
        while t < t_end:
            h = min(h, max_step)
            h_proposed = h
            last = False
            if t + h >= t_end or (t_end - t - h) < 1e-12 * span:
                h = t_end - t
                last = True
            for k in range(n):
                tmp[k] = y[k] + 0.5 * h * k1[k]
            amp, de = _drive(t + 0.5 * h, seg, kind, grid, om_v, de_v, ph_v, cd)
            _rhs(tmp, amp, de, diag_n, diag_v, hi, lo, k2)
            for k in range(n):
                tmp[k] = y[k] + 0.75 * h * k2[k]
            amp, de = _drive(t + 0.75 * h, seg, kind, grid, om_v, de_v, ph_v, cd)
            _rhs(tmp, amp, de, diag_n, diag_v, hi, lo, k3)
            for k in range(n):
                yn[k] = y[k] + h * (2.0 / 9.0 * k1[k] + 1.0 / 3.0 * k2[k] + 4.0 / 9.0 * k3[k])
            t_new = t_end if last else t + h
            amp, de = _drive(t_new, seg, kind, grid, om_v, de_v, ph_v, cd)
            _rhs(yn, amp, de, diag_n, diag_v, hi, lo, k4)
            e2 = 0.0
            for k in range(n):
                ek = h * (-5.0 / 72.0 * k1[k] + 1.0 / 12.0 * k2[k] + 1.0 / 9.0 * k3[k] - 0.125 * k4[k])
                e2 += ek.real * ek.real + ek.imag * ek.imag
            scale = max(atol, rtol * max(_norm(y), _norm(yn)))
            err = math.sqrt(e2) / scale
            if err <= 1.0:
                t = t_new
                for k in range(n):
                    y[k] = yn[k]
                    k1[k] = k4[k]
                steps += 1
                d = abs(_norm(y) - 1.0)
                if d > drift:
                    drift = d
                if err == 0.0:
                    fac = _FAC_MAX
                else:
                    fac = _SAFETY * err ** (-_PI_ALPHA) * err_prev ** _PI_BETA
                err_prev = max(err, 1e-4)
                if last:
                    h = max(h, h_proposed)
                else:
                    h *= min(_FAC_MAX, max(_FAC_MIN, fac))
            else:
                rejected += 1
                h *= max(_FAC_MIN, _SAFETY * err ** (-1.0 / 3.0))
                if h < h_min:
                    return y, steps, rejected, drift, STATUS_UNDERFLOW
    return y, steps, rejected, drift, STATUS_OK
