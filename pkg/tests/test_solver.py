import numpy as np
import pytest

from torusmix import spectral as sp
from torusmix.solver import (DtPolicy, SolverError, advect_diffuse,
                             cellular_velocity, navier_stokes_2d, ns_residual,
                             transport_reference)
from torusmix.spectral import ScalarField, VelocityField


def grid128():
    return sp.get_grid(128)


def two_mode_scalar(g):
    X, Y = g.meshgrid()
    return ScalarField(g, np.sin(2 * np.pi * X) + 0.5 * np.cos(4 * np.pi * Y))


def taylor_green_vorticity(g, t=0.0, nu=0.01):
    X, Y = g.meshgrid()
    decay = np.exp(-8.0 * np.pi ** 2 * nu * t)
    return ScalarField(g, 2.0 * np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y)
                       * decay)


def rel_l2(field, exact_values):
    g = field.grid
    diff = sp.l2_norm(ScalarField(g, field.values - exact_values))
    return diff / sp.l2_norm(ScalarField(g, exact_values))


# -- oracle: heat kernel ------------------------------------------------------

def test_heat_kernel_decay_matches_closed_form():
    g = grid128()
    th0 = two_mode_scalar(g)
    T = 0.1
    traj = advect_diffuse(None, th0, nu=1.0, horizon=T,
                          dt_policy=DtPolicy(fixed=1e-3))
    X, Y = g.meshgrid()
    exact = (np.exp(-4.0 * np.pi ** 2 * T) * np.sin(2 * np.pi * X)
             + 0.5 * np.exp(-16.0 * np.pi ** 2 * T) * np.cos(4 * np.pi * Y))
    assert rel_l2(traj.states[-1], exact) <= 1e-12


def test_heat_run_ledger_is_exact():
    g = grid128()
    th0 = two_mode_scalar(g)
    traj = advect_diffuse(None, th0, nu=1.0, horizon=0.1,
                          dt_policy=DtPolicy(fixed=1e-3))
    rec = traj.dissipation
    # diffusion factors are exact per mode, so the ledger closes to roundoff
    assert rec.balance_residual() <= 1e-12
    # instantaneous rate at t=0: nu * ||grad theta0||^2 = 4 pi^2
    assert abs(rec.rate[0] - 4.0 * np.pi ** 2) <= 1e-10 * 4.0 * np.pi ** 2
    assert np.all(np.diff(rec.cumulative) >= 0.0)


# -- oracle: rigid translation ------------------------------------------------

def test_rigid_translation_transports_exactly():
    g = grid128()
    th0 = two_mode_scalar(g)
    T = 0.25
    ones = np.ones((g.n, g.n))
    v = VelocityField(g, ones, 0.5 * ones)
    traj = advect_diffuse(v, th0, nu=0.0, horizon=T,
                          dt_policy=DtPolicy(fixed=5e-4))
    X, Y = g.meshgrid()
    exact = (np.sin(2 * np.pi * (X - T)) + 0.5 * np.cos(4 * np.pi * (Y - 0.5 * T)))
    assert rel_l2(traj.states[-1], exact) <= 1e-8


# -- oracle: Taylor-Green Navier-Stokes --------------------------------------

def test_taylor_green_mode_decay():
    g = grid128()
    nu = 0.01
    T = 0.2
    om0 = taylor_green_vorticity(g, 0.0, nu)
    traj = navier_stokes_2d(om0, None, nu, T, dt_policy=DtPolicy(fixed=5e-4))
    exact = taylor_green_vorticity(g, T, nu).values
    assert rel_l2(traj.states[-1], exact) <= 1e-8
    assert traj.dissipation.balance_residual() <= 1e-12


def test_taylor_green_energy_decay_rate():
    g = grid128()
    nu = 0.01
    T = 0.2
    om0 = taylor_green_vorticity(g, 0.0, nu)
    traj = navier_stokes_2d(om0, None, nu, T, dt_policy=DtPolicy(fixed=5e-4))
    rec = traj.dissipation
    # E(t) = E(0) exp(-16 pi^2 nu t) for the single-shell datum
    expect = rec.energy[0] * np.exp(-16.0 * np.pi ** 2 * nu * T)
    assert abs(rec.energy[-1] - expect) <= 1e-10 * rec.energy[0]


# -- oracle: inviscid invariants ---------------------------------------------

def test_inviscid_ns_conserves_energy_and_enstrophy():
    g = grid128()
    X, Y = g.meshgrid()
    om0 = ScalarField(g, 2.0 * np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y)
                      + 0.5 * np.sin(2 * np.pi * Y)
                      + 0.3 * np.cos(2 * np.pi * X + 4 * np.pi * Y))
    traj = navier_stokes_2d(om0, None, 0.0, 0.3, dt_policy=DtPolicy(fixed=5e-4))
    rec = traj.dissipation
    e_drift = np.abs(rec.energy - rec.energy[0]).max() / rec.energy[0]
    z_drift = np.abs(rec.enstrophy - rec.enstrophy[0]).max() / rec.enstrophy[0]
    assert e_drift <= 1e-12
    assert z_drift <= 1e-12
    assert rec.total() == 0.0


# -- oracle: energy balance at 256^2 -----------------------------------------

def test_energy_balance_residual_per_unit_time_256():
    g = sp.get_grid(256)
    X, Y = g.meshgrid()
    th0 = ScalarField(g, np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)
                      + 0.3 * np.cos(4 * np.pi * X))
    v = cellular_velocity(g, amplitude=1.0)
    T = 0.25
    traj = advect_diffuse(v, th0, nu=0.02, horizon=T,
                          dt_policy=DtPolicy(fixed=4e-4))
    assert traj.dissipation.balance_residual() / T <= 1e-8


# -- structural invariants ----------------------------------------------------

def test_scalar_mean_is_conserved_exactly():
    g = grid128()
    X, Y = g.meshgrid()
    th0 = ScalarField(g, 0.7 + np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y))
    v = cellular_velocity(g, amplitude=2.0)
    traj = advect_diffuse(v, th0, nu=0.01, horizon=0.2)
    m0 = th0.mean()
    for st in traj.states:
        assert abs(st.mean() - m0) <= 1e-13


def test_unforced_energy_never_increases():
    g = grid128()
    X, Y = g.meshgrid()
    th0 = ScalarField(g, np.sin(2 * np.pi * X) + np.cos(2 * np.pi * Y))
    v = cellular_velocity(g, amplitude=1.5)
    traj = advect_diffuse(v, th0, nu=0.005, horizon=0.3)
    e = traj.dissipation.energy
    assert np.all(np.diff(e) <= 1e-12 * e[0])


def test_sampling_lands_on_requested_times():
    g = sp.get_grid(64)
    th0 = two_mode_scalar(g)
    want = [0.0, 0.05, 0.11, 0.2]
    traj = advect_diffuse(cellular_velocity(g), th0, 0.01, 0.2,
                          sample_times=want)
    assert np.allclose(traj.times, want, atol=1e-12)
    assert len(traj.states) == len(want)
    st = traj.state_at(0.11)
    assert st.grid is g
    with pytest.raises(KeyError):
        traj.state_at(0.123)


def test_under_resolution_flag_and_tails():
    g = sp.get_grid(64)
    th0 = two_mode_scalar(g)
    traj = advect_diffuse(None, th0, 0.01, 0.05, tail_threshold=0.0)
    assert "dissipation-range unresolved" in traj.flags
    assert traj.tails.size == traj.times.size
    assert traj.summary()["flags"] == traj.flags


def test_dt_history_and_summary_fields():
    g = sp.get_grid(64)
    th0 = two_mode_scalar(g)
    traj = advect_diffuse(cellular_velocity(g), th0, 0.01, 0.1)
    s = traj.summary()
    assert s["steps"] == traj.dt_history.size
    assert abs(sum(traj.dt_history) - 0.1) <= 1e-12
    assert s["nu"] == 0.01
    assert s["dissipation_total"] == traj.dissipation.total()


# -- dt policy ----------------------------------------------------------------

def test_dt_policy_quantizes_to_geometric_ladder():
    pol = DtPolicy(cfl=0.4, dt_max=2e-3)
    g = sp.get_grid(128)
    dt = pol.propose(g, vmax=3.7)
    raw = 0.4 / (128 * 3.7)
    assert dt <= raw
    j = np.log(pol.dt_max / dt) / np.log(1.25)
    assert abs(j - round(j)) <= 1e-9


def test_dt_policy_caps_and_fixed_override():
    pol = DtPolicy(cfl=0.4, dt_max=2e-3)
    g = sp.get_grid(128)
    assert pol.propose(g, 0.0) == 2e-3
    assert pol.propose(g, 1e-9) == 2e-3
    fixed = DtPolicy(fixed=7e-4)
    assert fixed.propose(g, 100.0) == 7e-4


def test_dt_policy_rejects_bad_parameters():
    with pytest.raises(ValueError):
        DtPolicy(cfl=0.0)
    with pytest.raises(ValueError):
        DtPolicy(dt_max=-1.0)
    with pytest.raises(ValueError):
        DtPolicy(fixed=0.0)


def test_time_step_underflow_raises():
    g = sp.get_grid(64)
    th0 = two_mode_scalar(g)
    v = cellular_velocity(g, amplitude=1e9)
    with pytest.raises(SolverError, match="underflow"):
        advect_diffuse(v, th0, 0.01, 0.1,
                       dt_policy=DtPolicy(cfl=0.4, dt_min=1e-6))


# -- input validation ---------------------------------------------------------

def test_negative_viscosity_rejected():
    g = sp.get_grid(64)
    with pytest.raises(ValueError):
        advect_diffuse(None, two_mode_scalar(g), -1e-3, 0.1)


def test_nonpositive_horizon_rejected():
    g = sp.get_grid(64)
    with pytest.raises(ValueError):
        advect_diffuse(None, two_mode_scalar(g), 0.01, 0.0)


def test_sample_times_must_start_at_zero_and_fit():
    g = sp.get_grid(64)
    th0 = two_mode_scalar(g)
    with pytest.raises(ValueError):
        advect_diffuse(None, th0, 0.01, 0.1, sample_times=[0.05, 0.1])
    with pytest.raises(ValueError):
        advect_diffuse(None, th0, 0.01, 0.1, sample_times=[0.0, 0.2])


def test_vorticity_must_be_mean_zero():
    g = sp.get_grid(64)
    X, _ = g.meshgrid()
    om0 = ScalarField(g, 1.0 + np.cos(2 * np.pi * X))
    with pytest.raises(ValueError, match="mean-zero"):
        navier_stokes_2d(om0, None, 0.01, 0.1)


def test_provider_grid_mismatch_rejected():
    g, h = sp.get_grid(64), sp.get_grid(128)
    th0 = two_mode_scalar(g)
    with pytest.raises(ValueError, match="grid mismatch"):
        advect_diffuse(cellular_velocity(h), th0, 0.01, 0.1)


def test_provider_type_rejected():
    g = sp.get_grid(64)
    with pytest.raises(TypeError):
        advect_diffuse(3.14, two_mode_scalar(g), 0.01, 0.1)
    om0 = taylor_green_vorticity(g)
    with pytest.raises(TypeError):
        navier_stokes_2d(om0, 3.14, 0.01, 0.1)


# -- forcing work -------------------------------------------------------------

def test_work_rate_equals_force_velocity_inner_product():
    g = grid128()
    nu = 0.01
    om0 = taylor_green_vorticity(g, 0.0, nu)
    v0 = sp.velocity_from_vorticity(om0)

    def force(t):
        return v0

    traj = navier_stokes_2d(om0, force, nu, 0.01,
                            dt_policy=DtPolicy(fixed=1e-3))
    rec = traj.dissipation
    v2 = (sp.l2_norm(ScalarField(g, v0.u1)) ** 2
          + sp.l2_norm(ScalarField(g, v0.u2)) ** 2)
    # at t=0 the force equals the velocity, so <g, v> = ||v||^2
    assert abs(rec.work_rate[0] - v2) <= 1e-10 * v2
    assert rec.work_cum is not None


def test_forced_balance_closes():
    g = grid128()
    nu = 0.05
    om0 = taylor_green_vorticity(g, 0.0, nu)
    v_shape = sp.velocity_from_vorticity(om0)

    def force(t):
        return v_shape

    traj = navier_stokes_2d(om0, force, nu, 0.2,
                            dt_policy=DtPolicy(fixed=5e-4))
    # the stage-IF work ledger samples work on the folded stage states, so
    # the forced balance closes to quadrature accuracy, not machine zero
    assert traj.dissipation.balance_residual() <= 1e-5


def test_steady_forced_state_is_fixed_point():
    # force g = -nu Lap v on a steady Euler solution keeps it stationary
    g = grid128()
    nu = 0.02
    om0 = taylor_green_vorticity(g, 0.0, nu)
    lam = 8.0 * np.pi ** 2
    v0 = sp.velocity_from_vorticity(om0)

    def force(t):
        return VelocityField(g, nu * lam * v0.u1, nu * lam * v0.u2)

    traj = navier_stokes_2d(om0, force, nu, 0.1,
                            dt_policy=DtPolicy(fixed=1e-3))
    assert rel_l2(traj.states[-1], om0.values) <= 1e-10


# -- residual checker ---------------------------------------------------------

def tg_series(g, nu, times):
    # decaying Taylor-Green in the force-absorbing form: the heat part
    # cancels, so g = v.grad v, which for v = (-cos sin, sin cos)/(2 pi)
    # times the decay works out to -(decay^2/4pi)(sin 4pi x, sin 4pi y)
    X, Y = g.meshgrid()
    g1 = -np.sin(4 * np.pi * X) / (4.0 * np.pi)
    g2 = -np.sin(4 * np.pi * Y) / (4.0 * np.pi)
    vs, gs = [], []
    for t in times:
        om = taylor_green_vorticity(g, t, nu)
        amp2 = float(np.exp(-16 * np.pi ** 2 * nu * t))
        vs.append(sp.velocity_from_vorticity(om))
        gs.append(VelocityField(g, amp2 * g1, amp2 * g2))
    return vs, gs


def test_ns_residual_vanishes_on_exact_solution():
    g = grid128()
    nu = 0.01
    times = np.arange(7) * 1e-3
    vs, gs = tg_series(g, nu, times)
    rep = ns_residual(times, vs, gs, nu)
    assert rep["max_rel"] <= 1e-10
    assert len(rep["rows"]) == 3


def test_ns_residual_detects_wrong_viscosity():
    g = grid128()
    nu = 0.01
    times = np.arange(7) * 1e-3
    vs, gs = tg_series(g, nu, times)
    rep = ns_residual(times, vs, gs, 2.0 * nu)
    assert rep["max_rel"] >= 0.01


def test_ns_residual_input_validation():
    g = sp.get_grid(64)
    nu = 0.01
    times = np.arange(4) * 1e-3
    vs, gs = tg_series(g, nu, times)
    with pytest.raises(ValueError, match="five"):
        ns_residual(times, vs, gs, nu)
    times7 = np.arange(7) * 1e-3
    vs7, gs7 = tg_series(g, nu, times7)
    bad = times7.copy()
    bad[3] += 3e-4
    with pytest.raises(ValueError, match="uniform"):
        ns_residual(bad, vs7, gs7, nu)
    with pytest.raises(ValueError, match="count"):
        ns_residual(times7, vs7[:-1], gs7, nu)


# -- dissipation self-consistency --------------------------------------------

def test_dissipation_total_converged_in_dt():
    g = sp.get_grid(96)
    X, Y = g.meshgrid()
    th0 = ScalarField(g, np.sin(2 * np.pi * X) + np.cos(2 * np.pi * Y))
    v = cellular_velocity(g, amplitude=1.0)
    ds = []
    for dt in (2e-3, 1e-3):
        traj = advect_diffuse(v, th0, 0.05, 0.5, dt_policy=DtPolicy(fixed=dt))
        ds.append(traj.dissipation.total())
    assert abs(ds[0] - ds[1]) <= 1e-2 * ds[1]


# -- frozen transport reference ----------------------------------------------

def test_transport_reference_freezes_after_last_checkpoint():
    from torusmix.selfsim import ConstructionOneParams
    par = ConstructionOneParams(m=1, refine_base=2, grid=128)
    t_freeze = float(par.checkpoints[2])
    a = transport_reference(par, t_freeze)
    b = transport_reference(par, t_freeze + 0.5)
    assert np.array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        transport_reference(par, -0.1)


# -- exponential stepper ------------------------------------------------------

def test_phi_functions_recurrence_and_limits():
    from torusmix.solver import _phi123
    z = -np.concatenate([np.geomspace(1e-8, 0.2, 9),
                         np.geomspace(0.3, 80.0, 9)])
    p1, p2, p3 = _phi123(z)
    e = np.expm1(z)
    assert np.max(np.abs(p1 * z - e)) <= 1e-13
    assert np.max(np.abs(p2 * z - (p1 - 1.0))) <= 1e-13
    assert np.max(np.abs(p3 * z - (p2 - 0.5))) <= 1e-13
    p10, p20, p30 = _phi123(np.zeros(1))
    assert abs(p10[0] - 1.0) <= 1e-15
    assert abs(p20[0] - 0.5) <= 1e-15
    assert abs(p30[0] - 1.0 / 6.0) <= 1e-15


def test_taylor_green_mode_decay_etdrk4():
    g = grid128()
    nu = 0.01
    T = 0.2
    om0 = taylor_green_vorticity(g, 0.0, nu)
    traj = navier_stokes_2d(om0, None, nu, T, dt_policy=DtPolicy(fixed=5e-4),
                            sample_times=[0.0, T], stepper="etdrk4")
    assert rel_l2(traj.states[-1], taylor_green_vorticity(g, T, nu).values) \
        <= 1e-12
    assert traj.dissipation.balance_residual() <= 1e-12
    assert traj.stepper == "etdrk4"
    assert traj.summary()["stepper"] == "etdrk4"


def test_forced_mode_tracking_etdrk4():
    # omega(t) = (2 + sin 3t) cos cos has zero advection, so the run
    # isolates the phi-weighted force integration against a closed form
    g = grid128()
    nu = 0.02
    X, Y = g.meshgrid()
    base = np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y)
    lam8 = 8.0 * np.pi ** 2

    class FC:
        grid = g

        def curl_hat(self, t):
            a = 3.0 * np.cos(3.0 * t) + nu * lam8 * (2.0 + np.sin(3.0 * t))
            return sp._rfft2(a * base) * g.dealias_mask

    om0 = ScalarField(g, 2.0 * base)
    traj = navier_stokes_2d(om0, FC(), nu, 0.5,
                            dt_policy=DtPolicy(fixed=1e-3),
                            sample_times=[0.0, 0.5], stepper="etdrk4")
    ref = (2.0 + np.sin(1.5)) * base
    assert rel_l2(traj.states[-1], ref) <= 1e-11


def test_steady_forced_fixed_point_etdrk4_ledger():
    g = grid128()
    nu = 0.05
    om0 = taylor_green_vorticity(g, 0.0, nu)
    lam8 = 8.0 * np.pi ** 2

    class FC:
        grid = g

        def curl_hat(self, t):
            return nu * lam8 * sp._rfft2(om0.values) * g.dealias_mask

    traj = navier_stokes_2d(om0, FC(), nu, 0.2,
                            dt_policy=DtPolicy(fixed=5e-4),
                            sample_times=[0.0, 0.2], stepper="etdrk4")
    assert rel_l2(traj.states[-1], om0.values) <= 1e-12
    assert traj.dissipation.balance_residual() <= 1e-12


def test_unknown_stepper_rejected():
    g = grid128()
    om0 = taylor_green_vorticity(g)
    with pytest.raises(ValueError, match="stepper"):
        navier_stokes_2d(om0, None, 0.1, 0.1, stepper="rk9")
