"""1D profile toolkit: smooth bump, smoothstep, plateaus, antiderivative tables.

Every C-infinity profile in the package derives from the bump
phi(s) = exp(-1/(s(1-s))) on (0,1).  Closed forms are kept for the first two
derivatives; integrals of profiles (the smoothstep and the shear stream
profiles) live in cubic Hermite tables with exact derivative values at the
nodes, accurate to ~1e-12 and cheap enough for per-point kernels.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "bump",
    "bump_d1",
    "bump_d2",
    "TableFn",
    "antiderivative_table",
    "BUMP_MASS",
    "smoothstep",
    "smoothstep_d1",
    "smoothstep_d2",
    "smoothstep_d3",
    "plateau",
    "plateau_d1",
    "plateau_d2",
    "plateau_d3",
]


def bump(s):
    """exp(-1/(s(1-s))) on (0,1), zero outside. Vectorized."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (si * (1.0 - si)))
    return out


def bump_d1(s):
    """d/ds of bump; closed form phi * (1-2s)/(s(1-s))^2."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    q = si * (1.0 - si)
    out[inside] = np.exp(-1.0 / q) * (1.0 - 2.0 * si) / (q * q)
    return out


def bump_d2(s):
    # phi'' = phi * (r^2 + r') with r = (1-2s)/q^2, r' = (-2q - 2(1-2s)^2)/q^3
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    q = si * (1.0 - si)
    one2s = 1.0 - 2.0 * si
    r = one2s / (q * q)
    rp = (-2.0 * q - 2.0 * one2s * one2s) / (q * q * q)
    out[inside] = np.exp(-1.0 / q) * (r * r + rp)
    return out


# Gauss-Legendre nodes/weights reused by every table build.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


class TableFn:
    """Cubic Hermite interpolant of a function on [0,1] over a uniform grid.

    Stores node values and exact node derivatives; evaluation clamps to the
    endpoint values outside [0,1].  The raw arrays are handed to numba kernels
    directly, so keep the layout (values, derivs, m intervals) stable.
    """

    __slots__ = ("values", "derivs", "m")

    def __init__(self, values: np.ndarray, derivs: np.ndarray):
        values = np.ascontiguousarray(values, dtype=np.float64)
        derivs = np.ascontiguousarray(derivs, dtype=np.float64)
        if values.shape != derivs.shape or values.ndim != 1 or values.size < 2:
            raise ValueError("table needs matching 1d value/derivative arrays")
        self.values = values
        self.derivs = derivs
        self.m = values.size - 1
        self.values.flags.writeable = False
        self.derivs.flags.writeable = False

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        m = self.m
        u = np.clip(s, 0.0, 1.0) * m
        i = np.minimum(u.astype(np.int64), m - 1)
        t = u - i
        h = 1.0 / m
        v0 = self.values[i]
        v1 = self.values[i + 1]
        d0 = self.derivs[i]
        d1 = self.derivs[i + 1]
        t2 = t * t
        t3 = t2 * t
        out = (
            (2.0 * t3 - 3.0 * t2 + 1.0) * v0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * v1
            + (t3 - t2) * h * d1
        )
        return out[0] if scalar else out


def antiderivative_table(integrand, m: int = 4096) -> TableFn:
    """Table of F(s) = integral_0^s integrand, via per-interval Gauss-Legendre.

    Node derivatives are integrand values (exact), so the Hermite error is
    O(h^4 |F''''|) ~ 1e-12 for the profiles used here.
    """
    nodes = np.linspace(0.0, 1.0, m + 1)
    h = 1.0 / m
    # map GL nodes from [-1,1] into each interval
    mid = (nodes[:-1] + nodes[1:]) / 2.0
    pts = mid[:, None] + (h / 2.0) * _GL_NODES[None, :]
    pieces = (h / 2.0) * (integrand(pts) * _GL_WEIGHTS[None, :]).sum(axis=1)
    values = np.concatenate(([0.0], np.cumsum(pieces)))
    derivs = integrand(nodes)
    return TableFn(values, derivs)


_raw_step = antiderivative_table(bump)
#: exact-to-quadrature mass of the bump, integral_0^1 phi ds
BUMP_MASS = float(_raw_step.values[-1])

_step_values = _raw_step.values / BUMP_MASS
_step_values = _step_values.copy()
_step_values[-1] = 1.0  # pin the endpoint exactly
SMOOTHSTEP = TableFn(_step_values, _raw_step.derivs / BUMP_MASS)


def smoothstep(s):
    """S(s) = (1/Z) integral_0^s phi: 0 at 0, 1 at 1, all derivatives vanish at both ends."""
    return SMOOTHSTEP(s)


def smoothstep_d1(s):
    return bump(s) / BUMP_MASS


def smoothstep_d2(s):
    return bump_d1(s) / BUMP_MASS


def smoothstep_d3(s):
    return bump_d2(s) / BUMP_MASS


def plateau(s, margin: float, ramp: float):
    """Smooth plateau: 0 outside [margin, 1-margin], 1 on [margin+ramp, 1-margin-ramp].

    Rises through a smoothstep ramp of width `ramp` on both sides; symmetric
    under s -> 1-s (the two factors swap, so the product is bit-identical).
    """
    if margin < 0 or ramp <= 0 or margin + ramp > 0.5:
        raise ValueError("need margin >= 0, ramp > 0, margin + ramp <= 1/2")
    s = np.asarray(s, dtype=np.float64)
    return SMOOTHSTEP((s - margin) / ramp) * SMOOTHSTEP((1.0 - margin - s) / ramp)


def plateau_d1(s, margin: float, ramp: float):
    s = np.asarray(s, dtype=np.float64)
    a = (s - margin) / ramp
    b = (1.0 - margin - s) / ramp
    return (smoothstep_d1(a) * SMOOTHSTEP(b) - SMOOTHSTEP(a) * smoothstep_d1(b)) / ramp


def plateau_d2(s, margin: float, ramp: float):
    s = np.asarray(s, dtype=np.float64)
    a = (s - margin) / ramp
    b = (1.0 - margin - s) / ramp
    r2 = ramp * ramp
    return (smoothstep_d2(a) * SMOOTHSTEP(b)
            - 2.0 * smoothstep_d1(a) * smoothstep_d1(b)
            + SMOOTHSTEP(a) * smoothstep_d2(b)) / r2


def plateau_d3(s, margin: float, ramp: float):
    s = np.asarray(s, dtype=np.float64)
    a = (s - margin) / ramp
    b = (1.0 - margin - s) / ramp
    r3 = ramp * ramp * ramp
    return (smoothstep_d3(a) * SMOOTHSTEP(b)
            - 3.0 * smoothstep_d2(a) * smoothstep_d1(b)
            + 3.0 * smoothstep_d1(a) * smoothstep_d2(b)
            - SMOOTHSTEP(a) * smoothstep_d3(b)) / r3
