import numpy as np
import pytest

from torusmix.blocks import make_shear_family, refine
from torusmix.selfsim import (ConstructionOneParams, assemble_generation,
                              family_digest, force_c1, force_ladder,
                              generation_ladder, ideal_self_similar,
                              nu_identity_audit, velocity_c1)
from torusmix.spectral import (ScalarField, divergence_rel, get_grid, l2_norm,
                               sobolev_norm)


@pytest.fixture(scope="module")
def fam():
    return make_shear_family(refine_base=2, grid_n=512, steps_per_period=4,
                             sample=False)


@pytest.fixture(scope="module")
def par3(fam):
    return ConstructionOneParams(refine_base=2, m=3, nu_power=-2.0, family=fam)


@pytest.fixture(scope="module")
def force_rep(fam):
    # nu_power -4 puts the viscosity well under the tiling scale
    par = ConstructionOneParams(refine_base=2, m=3, nu_power=-4.0, family=fam)
    return force_c1(par)


# -- schedule arithmetic -----------------------------------------------------

def test_nu_identity_exact_at_literal_parameters():
    aud = nu_identity_audit(5, 10, m_max=12)
    assert aud["exact_ok"]
    assert all(r["exact"] for r in aud["rows"])
    assert max(r["float_rel"] for r in aud["rows"]) <= 1e-12


def test_nu_identity_desk_schedule():
    aud = nu_identity_audit(2, -2, m_max=12)
    assert aud["exact_ok"]
    nus = [r["nu"] for r in aud["rows"]]
    assert all(v > 0 for v in nus)
    assert all(a > b for a, b in zip(nus, nus[1:]))


def test_params_validation(fam):
    with pytest.raises(ValueError):
        ConstructionOneParams(m=0, family=fam)
    with pytest.raises(ValueError):
        ConstructionOneParams(refine_base=3, m=2, family=fam)
    with pytest.raises(ValueError):
        ConstructionOneParams(refine_base=2, m=6, family=fam)  # sub-pixel tiles
    par = ConstructionOneParams(refine_base=2, m=2, family=fam)
    man = par.manifest()
    assert man["checkpoints"][:3] == [0.0, 0.75, 8.0 / 9.0]
    assert man["nu"] == par.nu()
    assert man["family"] == family_digest(fam)


def test_family_digest_tracks_parameters(fam):
    other = make_shear_family(refine_base=2, grid_n=512, steps_per_period=4,
                              amplitude=0.1, sample=False)
    assert family_digest(fam) == family_digest(
        make_shear_family(refine_base=2, grid_n=512, steps_per_period=4,
                          sample=False))
    assert family_digest(fam) != family_digest(other)


# -- generations -------------------------------------------------------------

def test_generation_zero_is_tiled_pattern(fam):
    gen = assemble_generation(0, fam)
    pat = fam.members[0].pattern_grid(256)
    assert np.array_equal(gen.rho_at(0.0).values, np.tile(pat, (2, 2)))


def test_checkpoint_consistency_matches_refine_bitwise(fam):
    # the tiling formula and the index-gather refinement are the same map on
    # a dyadic grid, so the fields agree exactly, not just to tolerance
    rho0 = assemble_generation(0, fam).rho_at(0.0)
    stepped = rho0
    for n in (1, 2, 3):
        stepped = refine(stepped, fam)
        direct = assemble_generation(n, fam).rho_at(0.0)
        assert np.array_equal(stepped.values, direct.values)


def test_generation_report_invariants(fam):
    rep = assemble_generation(0, fam).report()
    assert rep["l2_dev"] <= 1e-6
    assert rep["mean_max"] <= 1e-10
    assert rep["l2_quadrature_certified"]
    for row in rep["rows"]:
        assert np.isfinite(row["hm1"]) and np.isfinite(row["grad_sup"])


def test_generation_report_depth_two(fam):
    rep = assemble_generation(2, fam).report(taus=(0.0, 0.5))
    assert rep["sub"] == 64
    assert rep["l2_dev"] <= 1e-6
    assert rep["mean_max"] <= 1e-10


def test_generation_hm1_halves_and_ladder_fit(fam):
    lad = generation_ladder(fam, count=5)
    hm1 = lad["hm1"]
    # deeper rungs sample fewer points per tile, so the dilation-exact
    # halving picks up quadrature error as the sub-grid shrinks
    for a, b in zip(hm1[:3], hm1[1:4]):
        assert abs(b / a - 0.5) < 2e-5
    assert abs(hm1[4] / hm1[3] - 0.5) < 1e-3
    assert lad["rate_rel_gap"] <= 0.15


def test_generation_velocity_amplitude_scaling(fam):
    g0 = assemble_generation(0, fam).v_at(0.25)
    g1 = assemble_generation(1, fam).v_at(0.25)
    ratio = g0.max_speed() / g1.max_speed()
    assert abs(ratio - 2.0) < 0.02


def test_generation_assignment_validation(fam):
    with pytest.raises(ValueError):
        assemble_generation(0, fam, assignment=np.zeros((3, 3), dtype=int))
    with pytest.raises(ValueError):
        assemble_generation(0, fam, assignment=np.full((2, 2), 5))


def test_generation_assignment_places_members():
    fam2 = make_shear_family(N=2, refine_base=2, grid_n=128,
                             steps_per_period=2, sample=False)
    gen = assemble_generation(0, fam2, assignment=[[0, 1], [1, 0]])
    tiles = [m.pattern_grid(64) for m in fam2.members]
    vals = gen.rho_at(0.0).values
    assert np.array_equal(vals[:64, :64], tiles[0])
    assert np.array_equal(vals[:64, 64:], tiles[1])
    assert np.array_equal(vals[64:, :64], tiles[1])
    assert np.array_equal(vals[64:, 64:], tiles[0])


# -- truncated velocity ------------------------------------------------------

def test_velocity_vanishes_at_checkpoints(par3):
    for t in par3.checkpoints[:-1]:
        v = velocity_c1(float(t), par3)
        assert v.max_speed() == 0.0


def test_velocity_zero_beyond_truncation(fam):
    par1 = ConstructionOneParams(refine_base=2, m=1, family=fam)
    # 0.9 sits in the generation-2 interval, past the m=1 truncation
    assert velocity_c1(0.9, par1).max_speed() == 0.0
    assert velocity_c1(0.97, par1).max_speed() == 0.0


def test_velocity_divergence_free(par3):
    for t in (0.3, 0.8, 0.92):
        v = velocity_c1(t, par3)
        assert v.max_speed() > 0
        assert divergence_rel(v) <= 1e-10


def test_velocity_sup_bound(par3):
    # |v^m| = eta'(t)/delta * |v_n at the warped time|, so the interval's
    # eta' ceiling gives a pointwise bound
    t = 0.8
    n = par3.warp.interval_of(t)
    c = par3.warp.checkpoints
    delta = float(c[n + 1] - c[n])
    tau = (par3.warp.eta(t) - float(c[n])) / delta
    vn = par3.generation(n).v_at(tau)
    dense = np.linspace(float(c[n]), float(c[n + 1]), 2001)
    eta_max = float(np.abs(par3.warp.eta_d(dense, 1)).max())
    assert velocity_c1(t, par3).max_speed() <= eta_max / delta * vn.max_speed() + 1e-12


def test_velocity_rejects_bad_time(par3):
    with pytest.raises(ValueError):
        velocity_c1(-0.1, par3)
    with pytest.raises(ValueError):
        velocity_c1(1.2, par3)


# -- force -------------------------------------------------------------------

def test_force_zero_for_zero_amplitude_family():
    quiet = make_shear_family(refine_base=2, grid_n=64, steps_per_period=2,
                              amplitude=0.0, sample=False)
    par = ConstructionOneParams(refine_base=2, m=1, family=quiet)
    for t in (0.3, 0.8):
        g = par.flow().force(t)
        assert np.all(g.u1 == 0.0) and np.all(g.u2 == 0.0)


def test_force_report_term_split(force_rep):
    assert force_rep["m"] == 3
    for row in force_rep["samples"]:
        for key in ("dt", "transport", "viscous", "total", "tail_fraction"):
            assert key in row
    assert force_rep["max_total"] > 0


def test_force_viscous_share_small_when_subordinate(force_rep):
    # nu * base^(2m) = 1/81 here, well under the tiling scale
    assert force_rep["viscous_share"] < 0.05


def test_force_envelope_uniform_across_ladder(force_rep):
    # raw maxima grow down the ladder; scaled by delta^2 * scale^(1-alpha)
    # they should collapse to a single constant within a modest spread
    env = force_rep["envelope_constants"]
    assert set(env) == {0, 1, 2, 3}
    assert force_rep["envelope_spread"] <= 2.2
    ratios = force_rep["growth_ratios"]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))


def test_force_under_resolution_raises(fam):
    par4 = ConstructionOneParams(refine_base=2, m=4, family=fam)
    c = par4.warp.checkpoints
    t = float(c[4] + 0.45 * (c[5] - c[4]))
    with pytest.raises(ValueError, match="under-resolved"):
        par4.flow().force(t)
    # the velocity itself is still well defined there
    assert velocity_c1(t, par4).max_speed() > 0


def test_force_cauchy_tails_decay(fam):
    lad = force_ladder(fam, ms=(1, 2, 3), nu_power=-4.0)
    tails = [row["tail"] for row in lad["tails"]]
    assert len(tails) == 2
    assert tails[1] < tails[0]
    assert lad["tail_ratios"][0] <= 0.7


# -- ideal self-similar evolution --------------------------------------------

def test_ideal_initial_pattern(fam):
    v, th = ideal_self_similar(fam, 0.0)
    pat = fam.members[0].pattern_grid(256)
    assert np.array_equal(th.values, np.tile(pat, (2, 2)))
    assert v.max_speed() == 0.0


def test_ideal_checkpoints_are_refinements(fam):
    _, th0 = ideal_self_similar(fam, 0.0)
    _, th1 = ideal_self_similar(fam, 0.75)
    _, th2 = ideal_self_similar(fam, 8.0 / 9.0)
    r1 = refine(th0, fam)
    r2 = refine(r1, fam)
    assert np.array_equal(th1.values, r1.values)
    assert np.array_equal(th2.values, r2.values)


def test_ideal_checkpoint_l2_unit(fam):
    for t in (0.0, 0.75, 8.0 / 9.0):
        _, th = ideal_self_similar(fam, t)
        assert abs(l2_norm(th) - 1.0) <= 1e-6


def test_ideal_hm1_quarter_after_two_refines(fam):
    # dilation by the base maps each mode k to base * k, so the H^-1 norm
    # scales by exactly 1/base per refinement on a pure mode
    g = get_grid(256)
    x = np.arange(256) / 256
    X, Y = np.meshgrid(x, x, indexing="ij")
    pure = ScalarField(g, np.sin(2 * np.pi * (X + Y)))
    twice = refine(refine(pure, fam), fam)
    ratio = sobolev_norm(twice, -1) / sobolev_norm(pure, -1)
    assert abs(ratio - 0.25) <= 1e-13


def test_ideal_mid_interval_properties(fam):
    v, th = ideal_self_similar(fam, 0.4)
    assert divergence_rel(v) <= 1e-10
    assert v.max_speed() > 0
    # linear block time: the scalar is the member evolution at tau = 0.4/0.75
    gen = assemble_generation(0, fam)
    assert np.array_equal(th.values, gen.rho_at(0.4 / 0.75).values)


def test_ideal_rejects_bad_calls(fam):
    fam2 = make_shear_family(N=2, refine_base=2, grid_n=64,
                             steps_per_period=2, sample=False)
    with pytest.raises(ValueError):
        ideal_self_similar(fam2, 0.1)
    with pytest.raises(ValueError):
        ideal_self_similar(fam, 1.0)
    with pytest.raises(ValueError):
        ideal_self_similar(fam, 0.9999)  # generation far past grid resolution


# -- fast solver-facing providers --------------------------------------------

@pytest.fixture(scope="module")
def flow256(fam):
    from torusmix.selfsim import ConstructionOneFlow
    par = ConstructionOneParams(refine_base=2, m=2, family=fam, grid=256)
    return ConstructionOneFlow(par)


def test_velocity_provider_matches_direct_evaluation(flow256):
    from torusmix.spectral import dealias_field
    vp = flow256.velocity_provider()
    g = vp.grid
    for t in (0.0, 0.3, 0.8, 0.9):
        u1, u2, vmax = vp.phys(t)
        v = flow256.velocity(t)
        d1 = dealias_field(ScalarField(g, v.u1)).values
        d2 = dealias_field(ScalarField(g, v.u2)).values
        ref = np.sqrt(np.mean(d1 ** 2 + d2 ** 2))
        err = np.sqrt(np.mean((u1 - d1) ** 2 + (u2 - d2) ** 2))
        assert err <= 1e-12 * max(ref, 1e-30)
        got_max = float(np.hypot(u1, u2).max())
        assert abs(vmax - got_max) <= 1e-9 * max(got_max, 1e-30)


def test_velocity_provider_zero_beyond_active_span(flow256):
    vp = flow256.velocity_provider()
    u1, u2, vmax = vp.phys(0.96)
    assert vmax == 0.0
    assert not u1.any() and not u2.any()
    assert flow256.velocity(0.96).max_speed() == 0.0


def test_force_provider_matches_direct_curl(flow256):
    from torusmix.spectral import curl, transform
    fp = flow256.force_curl_provider()
    g = fp.grid
    w = g.parseval_w
    for t in (0.3, 0.8, 0.9):
        got = fp.curl_hat(t)
        gf = flow256.force(t)
        ref = transform(curl(gf)) * g.dealias_mask
        num = np.sqrt(float(np.sum(w * np.abs(got - ref) ** 2)))
        den = np.sqrt(float(np.sum(w * np.abs(ref) ** 2)))
        assert num <= 1e-10 * den


def test_force_provider_viscosity_override(flow256):
    base = flow256.force_curl_provider()
    alt = flow256.force_curl_provider(nu=0.5)
    assert base.nu == flow256.params.nu()
    assert alt.nu == 0.5
    t = 0.3
    diff = np.abs(base.curl_hat(t) - alt.curl_hat(t)).max()
    assert diff > 0.0


def test_provider_rejects_under_resolved_interval(flow256):
    vp = flow256.velocity_provider(grid=64)
    vp.phys(0.2)  # generation 0 still fits on 64^2
    with pytest.raises(ValueError, match="under-resolved"):
        vp.phys(0.8)
