"""Hot pointwise kernels: phase flow maps and pattern evaluation.

Each kernel exists twice: a numba point-loop version and a vectorized numpy
fallback, selected once at import via the TORUSMIX_NO_NUMBA env flag (see
_accel).  The phase velocity fields are autonomous, so transporting a point
through a phase is RK4 on a steady field for a signed displacement parameter.

Table layout: every 1D profile is a cubic Hermite table (values, derivs) on a
uniform grid over [0,1], evaluated clamped; coordinates are periodized mod 1
before lookup (profiles vanish near 0 and 1, but the wrap must be exact for
points that leave the unit square mid-integration).

Phase field shapes (stream function psi, v = (-psi_y, psi_x)):
  orient 0 (horizontal shear band):  psi = -E(x) G(y)  =>  v = ( E(x) u(y), -E'(x) G(y))
  orient 1 (vertical shear band):    psi =  E(y) G(x)  =>  v = (-E'(y) G(x),  E(y) u(x))
with u = G' the shear profile and E the compact envelope.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import maybe_njit, using_numba

__all__ = ["flow_phase", "flow_phase_jac", "pattern_at", "pattern_grad_at",
           "holder_surrogate", "phase_velocity_grids", "phase_stream_grid"]


# ---------------------------------------------------------------- numba path

if using_numba:

    @maybe_njit(inline="always")
    def _tab(vals, ders, s):
        m = vals.shape[0] - 1
        if s <= 0.0:
            return vals[0]
        if s >= 1.0:
            return vals[m]
        u = s * m
        i = int(u)
        if i >= m:
            i = m - 1
        t = u - i
        h = 1.0 / m
        t2 = t * t
        t3 = t2 * t
        return ((2.0 * t3 - 3.0 * t2 + 1.0) * vals[i]
                + (t3 - 2.0 * t2 + t) * h * ders[i]
                + (-2.0 * t3 + 3.0 * t2) * vals[i + 1]
                + (t3 - t2) * h * ders[i + 1])

    @maybe_njit(inline="always")
    def _tab_d(vals, ders, s):
        # derivative of the same cubic Hermite interpolant _tab evaluates; the
        # variational equation must linearize the field actually integrated,
        # not a separately tabulated analytic derivative
        m = vals.shape[0] - 1
        if s <= 0.0 or s >= 1.0:
            return 0.0
        u = s * m
        i = int(u)
        if i >= m:
            i = m - 1
        t = u - i
        h = 1.0 / m
        t2 = t * t
        return ((6.0 * t2 - 6.0 * t) * (vals[i] - vals[i + 1]) / h
                + (3.0 * t2 - 4.0 * t + 1.0) * ders[i]
                + (3.0 * t2 - 2.0 * t) * ders[i + 1])

    @maybe_njit(inline="always")
    def _wrap(s):
        return s - math.floor(s)

    @maybe_njit
    def flow_phase(xs, ys, total, nsteps, orient,
                   tE_v, tE_d, tEp_v, tEp_d, tu_v, tu_d, tG_v, tG_d):
        """Advance points (in place) by RK4 through one phase's steady field.

        `total` is the signed displacement parameter; negative values run the
        inverse flow.  Arrays are flat float64 and modified in place.
        """
        h = total / nsteps
        for i in range(xs.size):
            x = xs[i]
            y = ys[i]
            for _ in range(nsteps):
                if orient == 0:
                    xa = _wrap(x); ya = _wrap(y)
                    k1x = _tab(tE_v, tE_d, xa) * _tab(tu_v, tu_d, ya)
                    k1y = -_tab(tEp_v, tEp_d, xa) * _tab(tG_v, tG_d, ya)
                    xa = _wrap(x + 0.5 * h * k1x); ya = _wrap(y + 0.5 * h * k1y)
                    k2x = _tab(tE_v, tE_d, xa) * _tab(tu_v, tu_d, ya)
                    k2y = -_tab(tEp_v, tEp_d, xa) * _tab(tG_v, tG_d, ya)
                    xa = _wrap(x + 0.5 * h * k2x); ya = _wrap(y + 0.5 * h * k2y)
                    k3x = _tab(tE_v, tE_d, xa) * _tab(tu_v, tu_d, ya)
                    k3y = -_tab(tEp_v, tEp_d, xa) * _tab(tG_v, tG_d, ya)
                    xa = _wrap(x + h * k3x); ya = _wrap(y + h * k3y)
                    k4x = _tab(tE_v, tE_d, xa) * _tab(tu_v, tu_d, ya)
                    k4y = -_tab(tEp_v, tEp_d, xa) * _tab(tG_v, tG_d, ya)
                else:
                    xa = _wrap(x); ya = _wrap(y)
                    k1x = -_tab(tEp_v, tEp_d, ya) * _tab(tG_v, tG_d, xa)
                    k1y = _tab(tE_v, tE_d, ya) * _tab(tu_v, tu_d, xa)
                    xa = _wrap(x + 0.5 * h * k1x); ya = _wrap(y + 0.5 * h * k1y)
                    k2x = -_tab(tEp_v, tEp_d, ya) * _tab(tG_v, tG_d, xa)
                    k2y = _tab(tE_v, tE_d, ya) * _tab(tu_v, tu_d, xa)
                    xa = _wrap(x + 0.5 * h * k2x); ya = _wrap(y + 0.5 * h * k2y)
                    k3x = -_tab(tEp_v, tEp_d, ya) * _tab(tG_v, tG_d, xa)
                    k3y = _tab(tE_v, tE_d, ya) * _tab(tu_v, tu_d, xa)
                    xa = _wrap(x + h * k3x); ya = _wrap(y + h * k3y)
                    k4x = -_tab(tEp_v, tEp_d, ya) * _tab(tG_v, tG_d, xa)
                    k4y = _tab(tE_v, tE_d, ya) * _tab(tu_v, tu_d, xa)
                x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                y += (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            xs[i] = x
            ys[i] = y

    @maybe_njit
    def pattern_at(xs, ys, out, tP_v, tP_d, f_pat, norm):
        """norm * P(x) sin(2 pi f (x - 1/2)) P(y) at scattered points."""
        two_pi_f = 2.0 * math.pi * f_pat
        for i in range(xs.size):
            x = _wrap(xs[i])
            y = _wrap(ys[i])
            out[i] = (norm * _tab(tP_v, tP_d, x) * math.sin(two_pi_f * (x - 0.5))
                      * _tab(tP_v, tP_d, y))

    @maybe_njit
    def flow_phase_jac(xs, ys, j11, j12, j21, j22, total, nsteps, orient,
                       tE_v, tE_d, tEp_v, tEp_d, tu_v, tu_d, tG_v, tG_d):
        """flow_phase plus the variational equation dJ/ds = Dw(X) J for the
        flow-map Jacobian (all six arrays updated in place).

        Dw is the exact derivative of the interpolated field (via _tab_d on
        the same tables flow_phase reads), so J linearizes the map actually
        computed rather than a nearby analytic field; that keeps transport
        identities closed to ODE truncation instead of table mismatch.
        """
        h = total / nsteps
        for i in range(xs.size):
            x = xs[i]
            y = ys[i]
            a11 = j11[i]; a12 = j12[i]; a21 = j21[i]; a22 = j22[i]
            for _ in range(nsteps):
                kx = 0.0; ky = 0.0
                k11 = 0.0; k12 = 0.0; k21 = 0.0; k22 = 0.0
                sx = 0.0; sy = 0.0
                s11 = 0.0; s12 = 0.0; s21 = 0.0; s22 = 0.0
                for stage in range(4):
                    if stage == 0:
                        c = 0.0; wgt = 1.0
                    elif stage == 3:
                        c = 1.0; wgt = 1.0
                    else:
                        c = 0.5; wgt = 2.0
                    px = _wrap(x + c * h * kx)
                    py = _wrap(y + c * h * ky)
                    b11 = a11 + c * h * k11
                    b12 = a12 + c * h * k12
                    b21 = a21 + c * h * k21
                    b22 = a22 + c * h * k22
                    if orient == 0:
                        E = _tab(tE_v, tE_d, px)
                        Ep = _tab(tEp_v, tEp_d, px)
                        u = _tab(tu_v, tu_d, py)
                        G = _tab(tG_v, tG_d, py)
                        kx = E * u
                        ky = -Ep * G
                        d11 = _tab_d(tE_v, tE_d, px) * u
                        d12 = E * _tab_d(tu_v, tu_d, py)
                        d21 = -_tab_d(tEp_v, tEp_d, px) * G
                        d22 = -Ep * _tab_d(tG_v, tG_d, py)
                    else:
                        E = _tab(tE_v, tE_d, py)
                        Ep = _tab(tEp_v, tEp_d, py)
                        u = _tab(tu_v, tu_d, px)
                        G = _tab(tG_v, tG_d, px)
                        kx = -Ep * G
                        ky = E * u
                        d11 = -Ep * _tab_d(tG_v, tG_d, px)
                        d12 = -_tab_d(tEp_v, tEp_d, py) * G
                        d21 = E * _tab_d(tu_v, tu_d, px)
                        d22 = _tab_d(tE_v, tE_d, py) * u
                    k11 = d11 * b11 + d12 * b21
                    k12 = d11 * b12 + d12 * b22
                    k21 = d21 * b11 + d22 * b21
                    k22 = d21 * b12 + d22 * b22
                    sx += wgt * kx; sy += wgt * ky
                    s11 += wgt * k11; s12 += wgt * k12
                    s21 += wgt * k21; s22 += wgt * k22
                x += (h / 6.0) * sx
                y += (h / 6.0) * sy
                a11 += (h / 6.0) * s11
                a12 += (h / 6.0) * s12
                a21 += (h / 6.0) * s21
                a22 += (h / 6.0) * s22
            xs[i] = x
            ys[i] = y
            j11[i] = a11; j12[i] = a12; j21[i] = a21; j22[i] = a22

    @maybe_njit
    def pattern_grad_at(xs, ys, j11, j12, j21, j22, out, gx, gy,
                        tP_v, tP_d, f_pat, norm):
        """Pattern value and chain-rule gradient J^T grad(pattern) at pulled-back
        points: grad(pattern o psi)_i = sum_j J_ji d_j pattern."""
        two_pi_f = 2.0 * math.pi * f_pat
        for i in range(xs.size):
            x = _wrap(xs[i])
            y = _wrap(ys[i])
            Px = _tab(tP_v, tP_d, x)
            Ppx = _tab_d(tP_v, tP_d, x)
            Py = _tab(tP_v, tP_d, y)
            Ppy = _tab_d(tP_v, tP_d, y)
            sn = math.sin(two_pi_f * (x - 0.5))
            cs = math.cos(two_pi_f * (x - 0.5))
            out[i] = norm * Px * sn * Py
            p1 = norm * (Ppx * sn + Px * two_pi_f * cs) * Py
            p2 = norm * Px * sn * Ppy
            gx[i] = j11[i] * p1 + j21[i] * p2
            gy[i] = j12[i] * p1 + j22[i] * p2

    @maybe_njit
    def holder_surrogate(f, alpha, max_level):
        """Discrete Holder C^alpha surrogate: sup|f| + max over dyadic shifts
        2^-l (l = 1..max_level) of max |f(x+h) - f(x)| / |h|^alpha, shifts taken
        along both axes on the periodic grid."""
        n = f.shape[0]
        sup = 0.0
        for i in range(n):
            for j in range(n):
                a = abs(f[i, j])
                if a > sup:
                    sup = a
        best = 0.0
        for lev in range(1, max_level + 1):
            sh = n >> lev
            if sh < 1:
                break
            hmag = sh / n
            scale = hmag ** (-alpha)
            worst = 0.0
            for i in range(n):
                ii = (i + sh) % n
                for j in range(n):
                    jj = (j + sh) % n
                    d1 = abs(f[ii, j] - f[i, j])
                    d2 = abs(f[i, jj] - f[i, j])
                    d = d1 if d1 > d2 else d2
                    if d > worst:
                        worst = d
            v = worst * scale
            if v > best:
                best = v
        return sup + best

# ---------------------------------------------------------------- numpy path

else:

    def _tab_np(vals, ders, s):
        m = vals.shape[0] - 1
        u = np.clip(s, 0.0, 1.0) * m
        i = np.minimum(u.astype(np.int64), m - 1)
        t = u - i
        h = 1.0 / m
        t2 = t * t
        t3 = t2 * t
        return ((2.0 * t3 - 3.0 * t2 + 1.0) * vals[i]
                + (t3 - 2.0 * t2 + t) * h * ders[i]
                + (-2.0 * t3 + 3.0 * t2) * vals[i + 1]
                + (t3 - t2) * h * ders[i + 1])

    def _tab_np_d(vals, ders, s):
        # derivative of the interpolant _tab_np evaluates (endpoint slopes are
        # zero for every table we build, so clipping matches the scalar path)
        m = vals.shape[0] - 1
        u = np.clip(s, 0.0, 1.0) * m
        i = np.minimum(u.astype(np.int64), m - 1)
        t = u - i
        h = 1.0 / m
        t2 = t * t
        return ((6.0 * t2 - 6.0 * t) * (vals[i] - vals[i + 1]) / h
                + (3.0 * t2 - 4.0 * t + 1.0) * ders[i]
                + (3.0 * t2 - 2.0 * t) * ders[i + 1])

    def flow_phase(xs, ys, total, nsteps, orient,
                   tE_v, tE_d, tEp_v, tEp_d, tu_v, tu_d, tG_v, tG_d):
        h = total / nsteps

        if orient == 0:
            def w(x, y):
                xa = x - np.floor(x)
                ya = y - np.floor(y)
                return (_tab_np(tE_v, tE_d, xa) * _tab_np(tu_v, tu_d, ya),
                        -_tab_np(tEp_v, tEp_d, xa) * _tab_np(tG_v, tG_d, ya))
        else:
            def w(x, y):
                xa = x - np.floor(x)
                ya = y - np.floor(y)
                return (-_tab_np(tEp_v, tEp_d, ya) * _tab_np(tG_v, tG_d, xa),
                        _tab_np(tE_v, tE_d, ya) * _tab_np(tu_v, tu_d, xa))

        x = xs.copy()
        y = ys.copy()
        for _ in range(nsteps):
            k1x, k1y = w(x, y)
            k2x, k2y = w(x + 0.5 * h * k1x, y + 0.5 * h * k1y)
            k3x, k3y = w(x + 0.5 * h * k2x, y + 0.5 * h * k2y)
            k4x, k4y = w(x + h * k3x, y + h * k3y)
            x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y += (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        xs[:] = x
        ys[:] = y

    def pattern_at(xs, ys, out, tP_v, tP_d, f_pat, norm):
        x = xs - np.floor(xs)
        y = ys - np.floor(ys)
        out[:] = (norm * _tab_np(tP_v, tP_d, x)
                  * np.sin(2.0 * np.pi * f_pat * (x - 0.5)) * _tab_np(tP_v, tP_d, y))

    def flow_phase_jac(xs, ys, j11, j12, j21, j22, total, nsteps, orient,
                       tE_v, tE_d, tEp_v, tEp_d, tu_v, tu_d, tG_v, tG_d):
        h = total / nsteps

        def rhs(x, y, b11, b12, b21, b22):
            xa = x - np.floor(x)
            ya = y - np.floor(y)
            if orient == 0:
                E = _tab_np(tE_v, tE_d, xa)
                Ep = _tab_np(tEp_v, tEp_d, xa)
                u = _tab_np(tu_v, tu_d, ya)
                G = _tab_np(tG_v, tG_d, ya)
                wx = E * u
                wy = -Ep * G
                d11 = _tab_np_d(tE_v, tE_d, xa) * u
                d12 = E * _tab_np_d(tu_v, tu_d, ya)
                d21 = -_tab_np_d(tEp_v, tEp_d, xa) * G
                d22 = -Ep * _tab_np_d(tG_v, tG_d, ya)
            else:
                E = _tab_np(tE_v, tE_d, ya)
                Ep = _tab_np(tEp_v, tEp_d, ya)
                u = _tab_np(tu_v, tu_d, xa)
                G = _tab_np(tG_v, tG_d, xa)
                wx = -Ep * G
                wy = E * u
                d11 = -Ep * _tab_np_d(tG_v, tG_d, xa)
                d12 = -_tab_np_d(tEp_v, tEp_d, ya) * G
                d21 = E * _tab_np_d(tu_v, tu_d, xa)
                d22 = _tab_np_d(tE_v, tE_d, ya) * u
            return (wx, wy,
                    d11 * b11 + d12 * b21, d11 * b12 + d12 * b22,
                    d21 * b11 + d22 * b21, d21 * b12 + d22 * b22)

        state = [xs.copy(), ys.copy(), j11.copy(), j12.copy(), j21.copy(), j22.copy()]
        for _ in range(nsteps):
            k1 = rhs(*state)
            k2 = rhs(*(s + 0.5 * h * k for s, k in zip(state, k1)))
            k3 = rhs(*(s + 0.5 * h * k for s, k in zip(state, k2)))
            k4 = rhs(*(s + h * k for s, k in zip(state, k3)))
            state = [s + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
                     for s, a, b, c, d in zip(state, k1, k2, k3, k4)]
        for dst, src in zip((xs, ys, j11, j12, j21, j22), state):
            dst[:] = src

    def pattern_grad_at(xs, ys, j11, j12, j21, j22, out, gx, gy,
                        tP_v, tP_d, f_pat, norm):
        x = xs - np.floor(xs)
        y = ys - np.floor(ys)
        two_pi_f = 2.0 * np.pi * f_pat
        Px = _tab_np(tP_v, tP_d, x)
        Ppx = _tab_np_d(tP_v, tP_d, x)
        Py = _tab_np(tP_v, tP_d, y)
        Ppy = _tab_np_d(tP_v, tP_d, y)
        sn = np.sin(two_pi_f * (x - 0.5))
        cs = np.cos(two_pi_f * (x - 0.5))
        out[:] = norm * Px * sn * Py
        p1 = norm * (Ppx * sn + Px * two_pi_f * cs) * Py
        p2 = norm * Px * sn * Ppy
        gx[:] = j11 * p1 + j21 * p2
        gy[:] = j12 * p1 + j22 * p2

    def holder_surrogate(f, alpha, max_level):
        n = f.shape[0]
        sup = float(np.abs(f).max())
        best = 0.0
        for lev in range(1, max_level + 1):
            sh = n >> lev
            if sh < 1:
                break
            hmag = sh / n
            d1 = np.abs(np.roll(f, -sh, axis=0) - f).max()
            d2 = np.abs(np.roll(f, -sh, axis=1) - f).max()
            best = max(best, max(d1, d2) * hmag ** (-alpha))
        return sup + best


def phase_velocity_grids(n, orient, tables, x=None):
    """Velocity components of one phase's steady field on an n x n grid
    (or at given 1d coordinates), via 1D profile evaluation + outer products.
    Returns (w1, w2) arrays shaped (len(x), len(x))."""
    tE_v, tE_d, tEp_v, tEp_d, tu_v, tu_d, tG_v, tG_d = tables
    if x is None:
        x = np.arange(n) / n
    if using_numba:
        def ev(vals, ders, s):
            out = np.empty_like(s)
            for i in range(s.size):
                out[i] = _tab(vals, ders, s[i])
            return out
    else:
        ev = _tab_np
    E = ev(tE_v, tE_d, x)
    Ep = ev(tEp_v, tEp_d, x)
    u = ev(tu_v, tu_d, x)
    G = ev(tG_v, tG_d, x)
    if orient == 0:
        w1 = np.outer(E, u)
        w2 = np.outer(-Ep, G)
    else:
        w1 = np.outer(-G, Ep)
        w2 = np.outer(u, E)
    return w1, w2


def phase_stream_grid(n, orient, tables, x=None):
    """Stream function of one phase's steady field: the velocity above is
    (d/dy, -d/dx) of this, since u = G' and Ep = E'."""
    tE_v, tE_d, _, _, _, _, tG_v, tG_d = tables
    if x is None:
        x = np.arange(n) / n
    if using_numba:
        def ev(vals, ders, s):
            out = np.empty_like(s)
            for i in range(s.size):
                out[i] = _tab(vals, ders, s[i])
            return out
    else:
        ev = _tab_np
    E = ev(tE_v, tE_d, x)
    G = ev(tG_v, tG_d, x)
    if orient == 0:
        return np.outer(E, G)
    return np.outer(-G, E)
