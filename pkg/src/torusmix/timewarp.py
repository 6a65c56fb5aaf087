"""Smooth time reparametrization gluing generation intervals.

eta maps each checkpoint interval [t_n, t_{n+1}] onto itself through the
endpoint-flat smooth step, so eta(t_n) = t_n exactly, eta is non-decreasing,
and every derivative vanishes at the checkpoints.  Outside the checkpoint
range eta is the identity (a finite list truncates the full accumulating
sequence; callers only evaluate inside glued intervals).

Checkpoint lists may live on any nonnegative range: the shrinking schedule
of the first assembly accumulates below 1, while the unit-pace replay that
drives the cube mixer glues the integer intervals [0, 1], [1, 2], ...
"""

from __future__ import annotations

import numpy as np

from .profiles import smoothstep, smoothstep_d1, smoothstep_d2, smoothstep_d3

__all__ = ["TimeWarp", "build_time_warp", "inverse_square_checkpoints"]


def inverse_square_checkpoints(count: int) -> list[float]:
    """t_n = 1 - (n+1)^-2 for n = 0..count-1: starts 0, 3/4, 8/9, 15/16, ...

    The gaps shrink like 2/n^3, so the glued intervals accumulate at 1."""
    return [1.0 - 1.0 / (n + 1) ** 2 for n in range(count)]


_STEP_D = {1: smoothstep_d1, 2: smoothstep_d2, 3: smoothstep_d3}


def _profile_maxima():
    s = np.linspace(0.0, 1.0, 20001)
    return {k: float(np.abs(fn(s)).max()) for k, fn in _STEP_D.items()}


class TimeWarp:
    """Piecewise smooth-step reparametrization over a checkpoint list.

    derivative_budget[n][k] holds the measured max of |eta^(k)| on interval n
    for k in {1,2,3}: the step maxima scale by delta^(1-k), so eta' is bounded
    by the same constant on every interval while higher derivatives grow as
    the intervals shrink.
    """

    def __init__(self, checkpoints):
        c = np.asarray(checkpoints, dtype=np.float64)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("need a 1d, non-empty checkpoint list")
        if np.any(np.diff(c) <= 0.0):
            raise ValueError("checkpoints must be strictly increasing")
        if c[0] < 0.0:
            raise ValueError("checkpoints must be nonnegative")
        self.checkpoints = c
        self.intervals = c.size - 1
        mx = _profile_maxima()
        self.derivative_budget = [
            {k: mx[k] * float(c[n + 1] - c[n]) ** (1 - k) for k in (1, 2, 3)}
            for n in range(self.intervals)
        ]

    def interval_of(self, t: float):
        """Index n with t_n <= t < t_{n+1}, else None."""
        c = self.checkpoints
        if t < c[0] or t >= c[-1]:
            return None
        return int(np.searchsorted(c, t, side="right") - 1)

    def _split(self, t):
        t = np.asarray(t, dtype=np.float64)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        c = self.checkpoints
        inside = (t >= c[0]) & (t < c[-1])
        n = np.clip(np.searchsorted(c, t, side="right") - 1, 0, max(self.intervals - 1, 0))
        return t, scalar, inside, n

    def eta(self, t):
        t, scalar, inside, n = self._split(t)
        out = t.copy()
        if self.intervals and np.any(inside):
            ni = n[inside]
            lo = self.checkpoints[ni]
            delta = self.checkpoints[ni + 1] - lo
            tau = (t[inside] - lo) / delta
            # the interpolated step can wander a few ulp (even denormal
            # negatives) outside [0,1] near its flat ends; keep eta inside
            # the interval it glues
            step = np.clip(smoothstep(tau), 0.0, 1.0)
            out[inside] = lo + delta * step
        return float(out[0]) if scalar else out

    def eta_d(self, t, k: int = 1):
        """k-th derivative of eta, k in {1,2,3}; identity values outside."""
        if k not in _STEP_D:
            raise ValueError("derivative order must be 1, 2, or 3")
        t, scalar, inside, n = self._split(t)
        out = np.full_like(t, 1.0 if k == 1 else 0.0)
        if self.intervals and np.any(inside):
            ni = n[inside]
            lo = self.checkpoints[ni]
            delta = self.checkpoints[ni + 1] - lo
            tau = (t[inside] - lo) / delta
            out[inside] = _STEP_D[k](tau) * delta ** (1 - k)
        return float(out[0]) if scalar else out


def build_time_warp(checkpoints) -> TimeWarp:
    return TimeWarp(checkpoints)
