"""Pseudo-spectral time integration on the periodic square.

Two integrators share one stepping core: scalar advection-diffusion and 2D
Navier-Stokes in vorticity-streamfunction form (pressure never represented).
The stepper is a Williamson RK3 with exact spectral diffusion factors, in two
arrangements.  The vorticity solver interleaves the factors between the stage
nodes (integrating-factor form): no splitting error even when nu lambda dt is
large, which the stiff forced construction runs need.  The scalar solver
wraps one exact half factor around the undiffused stages (Strang form): the
advective stages keep their exact discrete energy neutrality, so the balance
residual isolates a pure dt^3 stepper drift.  Both keep the dissipation
bookkeeping exact: the cumulative record accumulates the energy removed by
the diffusion factors with no time-quadrature error.  Forcing work uses an
interpolatory cubic quadrature on the stage nodes.

Advection uses the divergence form -div(v theta) with the 2/3 rule; products
of band-limited fields are alias-free, so the k=0 mode is untouched (mass is
conserved exactly) and the semi-discrete advection conserves energy.

The vorticity solver also offers an exponential fourth-order stepper
(stepper="etdrk4"): the viscous factor is exact and the forcing enters
through phi-function weights, so strongly damped forced modes keep full
accuracy where the interpolatory stage folding of the RK3 layout degrades to
an oscillatory response error.  Its dissipation/work ledger uses stage-node
quadrature (fourth order) rather than the exact factor accounting of the RK3
layouts, so the balance residual is a dt^4 diagnostic there, not machine
zero.
"""

from __future__ import annotations

import math

import numpy as np

from .spectral import (Grid, ScalarField, VelocityField, _irfft2, _rfft2,
                       advect_term, field_from_hat, l2_norm, laplacian,
                       top_octave_fraction)

__all__ = ["DtPolicy", "DissipationRecord", "Trajectory", "SolverError",
           "advect_diffuse", "navier_stokes_2d", "transport_reference",
           "ns_residual", "cellular_velocity"]

_EPS_T = 1e-13

# Williamson two-register third-order coefficients; stage times 0, 1/3, 3/4.
_RK_A = (0.0, -5.0 / 9.0, -153.0 / 128.0)
_RK_B = (1.0 / 3.0, 15.0 / 16.0, 8.0 / 15.0)
_RK_C = (0.0, 1.0 / 3.0, 3.0 / 4.0)


class SolverError(RuntimeError):
    """Raised when a run cannot continue (CFL underflow, non-finite state)."""


class DtPolicy:
    """Time-step control: dt = cfl * dx / max|v|, capped by dt_max.

    fixed overrides the adaptive choice entirely (still truncated to land on
    sample times).  Adaptive steps are quantized to a geometric ladder under
    dt_max so the diffusion-factor cache stays warm.
    """

    def __init__(self, cfl: float = 0.4, dt_max: float = 2e-3,
                 dt_min: float = 1e-12, fixed: float | None = None):
        if cfl <= 0 or dt_max <= 0 or dt_min <= 0:
            raise ValueError("time-step parameters must be positive")
        if fixed is not None and fixed <= 0:
            raise ValueError("fixed dt must be positive")
        self.cfl = float(cfl)
        self.dt_max = float(dt_max)
        self.dt_min = float(dt_min)
        self.fixed = None if fixed is None else float(fixed)

    def propose(self, grid: Grid, vmax: float) -> float:
        if self.fixed is not None:
            return self.fixed
        if vmax <= 0.0:
            return self.dt_max
        raw = self.cfl / (grid.n * vmax)
        if raw >= self.dt_max:
            return self.dt_max
        # quantize downward on a 1.25-geometric ladder keyed off dt_max
        j = int(np.ceil(np.log(self.dt_max / raw) / np.log(1.25)))
        return self.dt_max * 1.25 ** (-j)


class DissipationRecord:
    """Step-resolution energy ledger of one run.

    rate holds the instantaneous dissipation nu*||grad .||^2 at step
    boundaries (diagnostic); cumulative holds the exact energy removed by the
    diffusion factors, so energy[i] + cumulative[i] - energy[0] equals the
    advective drift of the scheme (minus the work integral when forced).
    """

    def __init__(self, times, energy, rate, cumulative, work_rate=None,
                 work_cum=None, enstrophy=None):
        self.times = np.asarray(times)
        self.energy = np.asarray(energy)
        self.rate = np.asarray(rate)
        self.cumulative = np.asarray(cumulative)
        self.work_rate = None if work_rate is None else np.asarray(work_rate)
        self.work_cum = None if work_cum is None else np.asarray(work_cum)
        self.enstrophy = None if enstrophy is None else np.asarray(enstrophy)

    def total(self) -> float:
        return float(self.cumulative[-1])

    def work_cumulative(self):
        # stepper-accumulated stage quadrature when available; otherwise
        # trapezoid of the boundary samples (O(dt^2))
        if self.work_cum is not None:
            return self.work_cum
        if self.work_rate is None:
            return None
        dt = np.diff(self.times)
        inc = 0.5 * dt * (self.work_rate[1:] + self.work_rate[:-1])
        return np.concatenate([[0.0], np.cumsum(inc)])

    def balance_residual(self) -> float:
        """max_t |E(t) - E(0) + D(t) - W(t)| (absolute)."""
        drift = self.energy - self.energy[0] + self.cumulative
        w = self.work_cumulative()
        if w is not None:
            drift = drift - w
        return float(np.abs(drift).max())


class Trajectory:
    """Sampled solution of one run plus its dissipation record and flags."""

    def __init__(self, kind, grid, times, states, dissipation, dt_history,
                 nu, flags, tails, stepper: str = "rk3"):
        self.kind = kind
        self.grid = grid
        self.times = np.asarray(times)
        self.states = list(states)
        self.dissipation = dissipation
        self.dt_history = np.asarray(dt_history)
        self.nu = float(nu)
        self.flags = list(flags)
        self.tails = np.asarray(tails)
        self.stepper = stepper
        self.dealias_fraction = grid.dealias_kmax / (grid.n / 2.0)

    def state_at(self, t: float) -> ScalarField:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise KeyError(f"no snapshot at t={t}")
        return self.states[i]

    def summary(self) -> dict:
        return {"kind": self.kind, "n": self.grid.n,
                "horizon": float(self.times[-1]),
                "steps": int(self.dt_history.size),
                "nu": self.nu, "stepper": self.stepper,
                "dissipation_total": self.dissipation.total(),
                "balance_residual": self.dissipation.balance_residual(),
                "max_tail": float(self.tails.max()) if self.tails.size else 0.0,
                "flags": list(self.flags)}


# -- velocity / force providers ---------------------------------------------

class _SteadyVelocity:
    """Dealiased physical components of a fixed velocity, computed once."""

    def __init__(self, v: VelocityField):
        g = v.grid
        self.grid = g
        nn = (g.n, g.n)
        self.u1 = _irfft2(_rfft2(v.u1) * g.dealias_mask, nn)
        self.u2 = _irfft2(_rfft2(v.u2) * g.dealias_mask, nn)
        self.vmax = float(np.sqrt(self.u1 ** 2 + self.u2 ** 2).max())

    def phys(self, t: float):
        return self.u1, self.u2, self.vmax


class _CallableVelocity:
    """Adapter for a t -> VelocityField callable; dealiases per evaluation
    and memoizes the last time so repeated stage evaluations share."""

    def __init__(self, fn, grid: Grid):
        self.fn = fn
        self.grid = grid
        self._t = None
        self._cached = None

    def phys(self, t: float):
        if self._t is not None and t == self._t:
            return self._cached
        v = self.fn(t)
        if v.grid != self.grid:
            raise ValueError("velocity provider grid mismatch")
        g = self.grid
        nn = (g.n, g.n)
        u1 = _irfft2(_rfft2(v.u1) * g.dealias_mask, nn)
        u2 = _irfft2(_rfft2(v.u2) * g.dealias_mask, nn)
        out = (u1, u2, float(np.sqrt(u1 ** 2 + u2 ** 2).max()))
        self._t, self._cached = t, out
        return out


def _canon_velocity(v, grid: Grid):
    if v is None:
        return None
    if hasattr(v, "phys"):
        if getattr(v, "grid", grid) != grid:
            raise ValueError("velocity provider grid mismatch")
        return v
    if isinstance(v, VelocityField):
        if v.grid != grid:
            raise ValueError("velocity grid mismatch")
        return _SteadyVelocity(v)
    if callable(v):
        return _CallableVelocity(v, grid)
    raise TypeError("velocity must be None, a VelocityField, a callable, "
                    "or an object with .phys(t)")


def cellular_velocity(grid: Grid, amplitude: float = 1.0) -> VelocityField:
    """Steady cellular test flow: psi = (A/2 pi) sin(2 pi x) sin(2 pi y)."""
    X, Y = grid.meshgrid()
    a = amplitude
    u1 = -a * np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)
    u2 = a * np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Y)
    return VelocityField(grid, u1, u2)


class _CallableForceCurl:
    """Adapter for t -> VelocityField force; returns the dealiased curl hat."""

    def __init__(self, fn, grid: Grid):
        self.fn = fn
        self.grid = grid
        self._t = None
        self._cached = None

    def curl_hat(self, t: float):
        if self._t is not None and t == self._t:
            return self._cached
        gf = self.fn(t)
        if gf.grid != self.grid:
            raise ValueError("force provider grid mismatch")
        g = self.grid
        ikx = 2.0 * np.pi * 1j * g.kx[:, None]
        iky = 2.0 * np.pi * 1j * g.ky[None, :]
        out = (_rfft2(gf.u2) * ikx - _rfft2(gf.u1) * iky) * g.dealias_mask
        self._t, self._cached = t, out
        return out


def _canon_force(f, grid: Grid):
    if f is None:
        return None
    if hasattr(f, "curl_hat"):
        if getattr(f, "grid", grid) != grid:
            raise ValueError("force provider grid mismatch")
        return f
    if callable(f):
        return _CallableForceCurl(f, grid)
    raise TypeError("force must be None, a callable, or an object with "
                    ".curl_hat(t)")


# -- stepping core -----------------------------------------------------------

class _Factors:
    """Exact diffusion factors for one (nu, dt) pair, in one of two layouts.

    Stage layout (stage_if): factors advance the stage-time representation
    between the Williamson nodes 0, 1/3, 3/4, 1, so the stiff linear part
    carries no splitting error even when nu lambda dt is large.  Split
    layout: one exact half-step factor around the undiffused advection stages
    (Strang); second order in the stiff cross terms, but the advective stages
    keep their exact skew-symmetric energy neutrality, so the balance
    residual isolates a pure dt^3 drift.  Every factor comes with the weight
    vector of the exact energy it removes from the state it acts on.
    """

    def __init__(self, grid: Grid, energy_w, nu: float, dt: float,
                 stage_if: bool):
        lam = 4.0 * np.pi ** 2 * grid.k2
        if stage_if:
            self.e1 = np.exp(-nu * lam * (dt / 3.0))
            self.e2 = np.exp(-nu * lam * (dt * 5.0 / 12.0))
            self.e3 = np.exp(-nu * lam * (dt / 4.0))
            self.d1 = (energy_w * (1.0 - self.e1 ** 2)).ravel()
            self.d2 = (energy_w * (1.0 - self.e2 ** 2)).ravel()
            self.d3 = (energy_w * (1.0 - self.e3 ** 2)).ravel()
        else:
            self.half = np.exp(-nu * lam * (0.5 * dt))
            self.dhalf = (energy_w * (1.0 - self.half ** 2)).ravel()


# interpolatory weights on the stage nodes (0, 1/3, 3/4, 1): exact on cubics,
# so the per-step work increment dt * sum w_i f(t + c_i dt) is O(dt^5) local
_WQ = (1.0 / 9.0, 9.0 / 20.0, 16.0 / 45.0, 1.0 / 12.0)

# Simpson weights on the exponential-stepper nodes (0, 1/2, 1/2, 1)
_EQ = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


def _phi123(z):
    """phi_1..phi_3 of a real nonpositive array, series-switched for small z.

    phi_k(z) = (e^z - sum_{j<k} z^j/j!) / z^k; the expm1 forms cancel badly
    below |z| ~ 0.25, where a degree-11 Taylor tail is exact to roundoff.
    """
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < 0.25
    zl = np.where(small, 1.0, z)
    em = np.expm1(zl)
    p1 = em / zl
    p2 = (em - zl) / zl ** 2
    p3 = (em - zl - 0.5 * zl ** 2) / zl ** 3
    s1 = np.zeros_like(z)
    s2 = np.zeros_like(z)
    s3 = np.zeros_like(z)
    for k in range(11, -1, -1):
        s1 *= z
        s1 += 1.0 / math.factorial(k + 1)
        s2 *= z
        s2 += 1.0 / math.factorial(k + 2)
        s3 *= z
        s3 += 1.0 / math.factorial(k + 3)
    return (np.where(small, s1, p1), np.where(small, s2, p2),
            np.where(small, s3, p3))


class _EtdTables:
    """Exponential-stepper factors for one (nu, dt) pair.

    E, E2 are the full/half viscous factors; P12 pushes a stage tendency
    through the half step; F1..F3 are the final phi-weight combinations, so
    the update is u <- E u + F1 N1 + F2 (N2 + N3) + F3 N4.  With nu = 0 they
    reduce to the classical fourth-order Runge-Kutta tableau.
    """

    def __init__(self, grid: Grid, nu: float, dt: float):
        lam = 4.0 * np.pi ** 2 * grid.k2
        z = -nu * lam * dt
        self.E = np.exp(z)
        self.E2 = np.exp(0.5 * z)
        p1h, _, _ = _phi123(0.5 * z)
        self.P12 = (0.5 * dt) * p1h
        p1, p2, p3 = _phi123(z)
        self.F1 = dt * (p1 - 3.0 * p2 + 4.0 * p3)
        self.F2 = dt * (2.0 * p2 - 4.0 * p3)
        self.F3 = dt * (4.0 * p3 - p2)


def _power(hat):
    p = hat.real ** 2
    p += hat.imag ** 2
    return p.ravel()


def _run(kind, grid, hat0, nu, horizon, dt_policy, sample_times,
         tail_threshold, stage_rhs, vmax_fn, energy_w, rate_w,
         work_fn=None, enstrophy=False, stage_if=True, etdrk4=False):
    """Common loop for both integrators; evolves a hat array in place.

    stage_rhs(hat, t) returns the dealiased advection (+forcing) tendency;
    None means pure diffusion.  vmax_fn(hat, t) feeds the CFL estimate.
    stage_if picks the factor layout of _Factors; work_fn requires it.
    etdrk4 overrides both RK3 layouts with the exponential stepper.
    """
    if nu < 0:
        raise ValueError("viscosity must be nonnegative")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    policy = dt_policy or DtPolicy()
    if sample_times is None:
        sample_times = np.linspace(0.0, horizon, 9)
    samples = np.asarray(sorted(float(t) for t in sample_times))
    if samples.size == 0 or abs(samples[0]) > _EPS_T or \
            samples[-1] > horizon + _EPS_T:
        raise ValueError("sample times must start at 0 and stay within the horizon")
    if abs(samples[-1] - horizon) > _EPS_T:
        samples = np.append(samples, horizon)
    samples[0] = 0.0
    samples[-1] = horizon

    hat = np.array(hat0 * grid.dealias_mask)
    ew_flat = energy_w.ravel()
    rw_flat = rate_w.ravel()
    pw_flat = grid.parseval_w.ravel()
    factors: dict[float, _Factors] = {}

    t = 0.0
    cum = 0.0
    p0 = _power(hat)
    step_times = [0.0]
    energies = [0.5 * float(ew_flat @ p0)]
    rates = [nu * float(rw_flat @ p0)]
    cums = [0.0]
    works = [work_fn(hat, 0.0)] if work_fn else None
    work_cums = [0.0] if work_fn else None
    wq_boundary = works[0] if works else 0.0
    wcum = 0.0
    zs = [0.5 * float(pw_flat @ p0)] if enstrophy else None
    dts = []
    snap_states = []
    snap_tails = []
    flags = []
    q = np.zeros_like(hat)

    def take_snapshot():
        fld = field_from_hat(grid, hat.copy())
        snap_states.append(fld)
        tail = top_octave_fraction(fld)
        snap_tails.append(tail)
        if tail > tail_threshold and "dissipation-range unresolved" not in flags:
            flags.append("dissipation-range unresolved")

    take_snapshot()
    si = 1
    while si < samples.size:
        target = samples[si]
        vmax = vmax_fn(hat, t) if vmax_fn is not None else 0.0
        dt = policy.propose(grid, vmax)
        remaining = target - t
        landing = dt >= remaining - _EPS_T
        if landing:
            dt = remaining
        if dt < policy.dt_min:
            raise SolverError(f"time step underflow at t={t:.6g} "
                              f"(dt={dt:.3g}, max|v|={vmax:.3g})")
        fac = factors.get(dt)
        if fac is None:
            if len(factors) > 8:
                factors.clear()
            fac = factors[dt] = (_EtdTables(grid, nu, dt) if etdrk4 else
                                 _Factors(grid, energy_w, nu, dt, stage_if))
        diffusive = nu > 0.0
        winc = _WQ[0] * wq_boundary if work_fn is not None else 0.0
        rinc = 0.0

        if etdrk4:
            th = t + 0.5 * dt
            if stage_rhs is not None:
                n1 = stage_rhs(hat, t)
                a = fac.E2 * hat + fac.P12 * n1
                n2 = stage_rhs(a, th)
                b = fac.E2 * hat + fac.P12 * n2
                n3 = stage_rhs(b, th)
                c = fac.E2 * a + fac.P12 * (2.0 * n3 - n1)
                n4 = stage_rhs(c, t + dt)
                if work_fn is not None:
                    winc = (_EQ[0] * wq_boundary + _EQ[1] * work_fn(a, th)
                            + _EQ[2] * work_fn(b, th))
                if diffusive:
                    rinc = (_EQ[0] * rates[-1]
                            + nu * (_EQ[1] * float(rw_flat @ _power(a))
                                    + _EQ[2] * float(rw_flat @ _power(b))))
                np.multiply(hat, fac.E, out=hat)
                hat += fac.F1 * n1
                hat += fac.F2 * (n2 + n3)
                hat += fac.F3 * n4
            else:
                if diffusive:
                    a = fac.E2 * hat
                    rinc = (_EQ[0] * rates[-1] + nu * (_EQ[1] + _EQ[2])
                            * float(rw_flat @ _power(a)))
                np.multiply(hat, fac.E, out=hat)
        elif stage_if:
            # stage 1 at t
            if stage_rhs is not None:
                np.copyto(q, stage_rhs(hat, t))
                q *= dt
                hat += _RK_B[0] * q
            if diffusive:
                cum += 0.5 * float(fac.d1 @ _power(hat))
                np.multiply(hat, fac.e1, out=hat)
                if stage_rhs is not None:
                    q *= fac.e1

            # stage 2 at t + dt/3
            if stage_rhs is not None:
                ts = t + _RK_C[1] * dt
                rhs = stage_rhs(hat, ts)
                if work_fn is not None:
                    winc += _WQ[1] * work_fn(hat, ts)
                q *= _RK_A[1]
                q += dt * rhs
                hat += _RK_B[1] * q
            if diffusive:
                cum += 0.5 * float(fac.d2 @ _power(hat))
                np.multiply(hat, fac.e2, out=hat)
                if stage_rhs is not None:
                    q *= fac.e2

            # stage 3 at t + 3 dt/4
            if stage_rhs is not None:
                ts = t + _RK_C[2] * dt
                rhs = stage_rhs(hat, ts)
                if work_fn is not None:
                    winc += _WQ[2] * work_fn(hat, ts)
                q *= _RK_A[2]
                q += dt * rhs
                hat += _RK_B[2] * q
            if diffusive:
                cum += 0.5 * float(fac.d3 @ _power(hat))
                np.multiply(hat, fac.e3, out=hat)
        else:
            if diffusive:
                cum += 0.5 * float(fac.dhalf @ _power(hat))
                np.multiply(hat, fac.half, out=hat)
            if stage_rhs is not None:
                for i in range(3):
                    rhs = stage_rhs(hat, t + _RK_C[i] * dt)
                    if i == 0:
                        np.copyto(q, rhs)
                        q *= dt
                    else:
                        q *= _RK_A[i]
                        q += dt * rhs
                    hat += _RK_B[i] * q
            if diffusive:
                cum += 0.5 * float(fac.dhalf @ _power(hat))
                np.multiply(hat, fac.half, out=hat)

        t = target if landing else t + dt
        dts.append(dt)
        p = _power(hat)
        e = 0.5 * float(ew_flat @ p)
        if not np.isfinite(e):
            raise SolverError(f"non-finite state at t={t:.6g}")
        step_times.append(t)
        energies.append(e)
        r_end = nu * float(rw_flat @ p)
        if etdrk4 and diffusive:
            cum += dt * (rinc + _EQ[3] * r_end)
        rates.append(r_end)
        cums.append(cum)
        if works is not None:
            wq_boundary = work_fn(hat, t)
            works.append(wq_boundary)
            wcum += dt * (winc + (_EQ[3] if etdrk4 else _WQ[3]) * wq_boundary)
            work_cums.append(wcum)
        if zs is not None:
            zs.append(0.5 * float(pw_flat @ p))
        if landing:
            take_snapshot()
            si += 1

    record = DissipationRecord(step_times, energies, rates, cums,
                               work_rate=works, work_cum=work_cums,
                               enstrophy=zs)
    return Trajectory(kind, grid, samples, snap_states, record, dts, nu,
                      flags, snap_tails,
                      stepper="etdrk4" if etdrk4 else "rk3")


# -- public integrators ------------------------------------------------------

def advect_diffuse(v_provider, theta0: ScalarField, nu: float, horizon: float,
                   dt_policy: DtPolicy | None = None, sample_times=None,
                   tail_threshold: float = 1e-6) -> Trajectory:
    """Integrate d_t theta + v . grad theta = nu Lap theta.

    v_provider: None (pure diffusion), a VelocityField (steady), a callable
    t -> VelocityField, or a fast provider exposing .phys(t) -> (u1, u2, vmax)
    with dealiased physical components.  The scalar mean is conserved exactly;
    the cumulative dissipation record is exact for the diffusion factors.
    """
    grid = theta0.grid
    provider = _canon_velocity(v_provider, grid)
    mask = grid.dealias_mask
    ikx = (2.0 * np.pi * 1j * grid.kx[:, None]) * mask
    iky = (2.0 * np.pi * 1j * grid.ky[None, :]) * mask
    nn = (grid.n, grid.n)
    rate_w = grid.parseval_w * (4.0 * np.pi ** 2 * grid.k2)

    stage_rhs = None
    vmax_fn = None
    if provider is not None:
        def stage_rhs(hat, ts):
            u1, u2, _ = provider.phys(ts)
            thp = _irfft2(hat, nn)
            return -(ikx * _rfft2(u1 * thp) + iky * _rfft2(u2 * thp))

        def vmax_fn(hat, t):
            return provider.phys(t)[2]

    return _run("scalar", grid, theta0.hat, nu, horizon, dt_policy,
                sample_times, tail_threshold, stage_rhs, vmax_fn,
                energy_w=grid.parseval_w, rate_w=rate_w, stage_if=False)


def navier_stokes_2d(omega0: ScalarField, force_curl, nu: float,
                     horizon: float, dt_policy: DtPolicy | None = None,
                     sample_times=None, tail_threshold: float = 1e-6,
                     stepper: str = "rk3") -> Trajectory:
    """Integrate 2D Navier-Stokes in vorticity form with optional body force.

    omega0 must be mean-zero.  force_curl: None, a callable t -> VelocityField
    (interpreted as the force g; its curl is taken spectrally), or a fast
    provider exposing .curl_hat(t).  States are vorticity snapshots; the
    dissipation record tracks the kinetic energy 0.5||v||^2, its exact
    diffusion drop, the enstrophy, and the forcing work rate.  stepper picks
    "rk3" (integrating-factor Williamson layout, exact energy ledger) or
    "etdrk4" (exponential fourth order, quadrature ledger).
    """
    if stepper not in ("rk3", "etdrk4"):
        raise ValueError(f"unknown stepper {stepper!r}")
    grid = omega0.grid
    scale = max(float(np.abs(omega0.values).max()), 1.0)
    if abs(omega0.mean()) > 1e-10 * scale:
        raise ValueError("initial vorticity must be mean-zero")
    force = _canon_force(force_curl, grid)
    mask = grid.dealias_mask
    ikx = (2.0 * np.pi * 1j * grid.kx[:, None]) * mask
    iky = (2.0 * np.pi * 1j * grid.ky[None, :]) * mask
    nn = (grid.n, grid.n)

    # kinetic energy: ||v||^2 = sum w |omega_hat|^2 / lambda, lambda = (2pi|k|)^2
    lam = 4.0 * np.pi ** 2 * grid.k2
    inv_lam = np.zeros_like(lam)
    nz = lam > 0
    inv_lam[nz] = 1.0 / lam[nz]
    energy_w = grid.parseval_w * inv_lam
    # velocity from vorticity: v = grad^perp psi, psi_hat = -omega_hat/lambda
    m1 = 1j * grid.ky[None, :] * (2.0 * np.pi * inv_lam)
    m2 = -1j * grid.kx[:, None] * (2.0 * np.pi * inv_lam)
    ew_flat = energy_w.ravel()

    def velocity_phys(hat):
        u1 = _irfft2(m1 * hat, nn)
        u2 = _irfft2(m2 * hat, nn)
        return u1, u2

    def stage_rhs(hat, ts):
        u1, u2 = velocity_phys(hat)
        wp = _irfft2(hat, nn)
        rhs = -(ikx * _rfft2(u1 * wp) + iky * _rfft2(u2 * wp))
        if force is not None:
            rhs = rhs + force.curl_hat(ts) * mask
        return rhs

    def vmax_fn(hat, t):
        u1, u2 = velocity_phys(hat)
        return float(np.sqrt(u1 ** 2 + u2 ** 2).max())

    def work_fn(hat, t):
        # <g, v> = -<curl g, psi> with psi_hat = -omega_hat/lambda, so the
        # rate is + sum (w/lambda) Re[curl_g_hat conj(omega_hat)]
        fh = force.curl_hat(t)
        return float(ew_flat @ (fh.real.ravel() * hat.real.ravel()
                                + fh.imag.ravel() * hat.imag.ravel()))

    return _run("ns", grid, omega0.hat, nu, horizon, dt_policy, sample_times,
                tail_threshold, stage_rhs, vmax_fn,
                energy_w=energy_w, rate_w=grid.parseval_w,
                work_fn=work_fn if force is not None else None,
                enstrophy=True, etdrk4=(stepper == "etdrk4"))


def transport_reference(params, t: float) -> ScalarField:
    """Inviscid reference scalar of the truncated construction: the ideal
    evolution up to checkpoint m+1, frozen afterwards."""
    from .selfsim import ideal_self_similar
    if t < 0:
        raise ValueError("time must be nonnegative")
    t_freeze = float(params.checkpoints[params.m + 1])
    _, theta = ideal_self_similar(params.family, min(float(t), t_freeze),
                                  grid=params.grid)
    return theta


def ns_residual(times, v_fields, g_fields, nu: float) -> dict:
    """Direct residual of d_t v + v . grad v - nu Lap v - g on sampled fields.

    times must be uniformly spaced (>= 5 samples); the time derivative uses
    the five-point fourth-order stencil, so the two samples at each end carry
    no row.  Norms are L2 over both components; rel divides by the largest
    term norm in the row.
    """
    times = np.asarray([float(t) for t in times])
    if times.size < 5:
        raise ValueError("need at least five samples for the time stencil")
    if len(v_fields) != times.size or len(g_fields) != times.size:
        raise ValueError("field count does not match times")
    h = times[1] - times[0]
    if h <= 0 or np.abs(np.diff(times) - h).max() > 1e-9 * h:
        raise ValueError("times must be uniformly spaced")
    grid = v_fields[0].grid

    def comp_norm(a1, a2):
        return float(np.sqrt(l2_norm(ScalarField(grid, a1)) ** 2
                             + l2_norm(ScalarField(grid, a2)) ** 2))

    rows = []
    for i in range(2, times.size - 2):
        vm2, vm1, v0, vp1, vp2 = v_fields[i - 2:i + 3]
        dt1 = (vm2.u1 - 8.0 * vm1.u1 + 8.0 * vp1.u1 - vp2.u1) / (12.0 * h)
        dt2 = (vm2.u2 - 8.0 * vm1.u2 + 8.0 * vp1.u2 - vp2.u2) / (12.0 * h)
        a1 = advect_term(v0, ScalarField(grid, v0.u1)).values
        a2 = advect_term(v0, ScalarField(grid, v0.u2)).values
        lap1 = laplacian(ScalarField(grid, v0.u1)).values
        lap2 = laplacian(ScalarField(grid, v0.u2)).values
        g = g_fields[i]
        r1 = dt1 + a1 - nu * lap1 - g.u1
        r2 = dt2 + a2 - nu * lap2 - g.u2
        res = comp_norm(r1, r2)
        scale = max(comp_norm(dt1, dt2), comp_norm(a1, a2),
                    nu * comp_norm(lap1, lap2), comp_norm(g.u1, g.u2), 1e-300)
        rows.append({"t": float(times[i]), "residual": res,
                     "scale": scale, "rel": res / scale})
    return {"rows": rows, "max_rel": max(r["rel"] for r in rows),
            "h": float(h), "nu": float(nu)}
