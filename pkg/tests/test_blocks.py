import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusmix import blocks, spectral as sp


# One fully sampled family plus its verification report anchor most of the
# checks below.  Building and verifying at 512^2 costs a couple of minutes,
# so both are module-scoped.

@pytest.fixture(scope="module")
def fam2():
    return blocks.make_shear_family(refine_base=2, grid_n=256, steps_per_period=4)


@pytest.fixture(scope="module")
def report512(fam2):
    return blocks.verify_family(fam2, grid_n=512, moment_cert_max=1728)


def rows(report, check):
    out = [r for r in report["rows"] if r["check"] == check]
    assert out, f"no rows for {check}"
    return out


def test_shapes_divergence_free(report512):
    for r in rows(report512, "divergence"):
        assert r["measured"] <= 1e-8


def test_shapes_tangent_to_boundary(report512):
    for r in rows(report512, "tangency"):
        assert r["measured"] <= 1e-8


def test_margin_band_is_empty(report512):
    for r in rows(report512, "margin-band"):
        assert r["measured"] <= 1e-10


def test_mean_vanishes_at_every_sample(report512):
    for r in rows(report512, "mean"):
        assert r["measured"] <= 1e-10


def test_unit_l2_certified_at_phase_endpoints(report512):
    got = {r["t"]: r for r in rows(report512, "l2-normalization")}
    for t in (0.0, 0.5, 1.0):
        r = got[t]
        assert r["pass"] is True
        assert abs(r["measured"] - 1.0) <= 1e-6


def test_scalar_is_nonconstant(report512):
    for r in rows(report512, "non-constant"):
        assert r["measured"] >= 0.5


def test_transport_residual_under_tolerance(report512):
    for r in rows(report512, "transport-residual"):
        assert r["measured"] <= 1e-4


def test_report_all_hard_pass(report512):
    assert report512["uncertified"] == 0
    assert report512["all_hard_pass"] is True


def test_patching_ratio_matches_refine_target(report512):
    (r,) = rows(report512, "patching-residual")
    assert abs(r["extra"]["hm1_ratio"] - 0.5) < 5e-3


def test_velocity_vanishes_at_phase_boundaries(fam2):
    # bump windows close at slot edges, so t in {0, 1/2, 1} carry zero field
    for k in (0, 2, 4):
        assert not np.any(fam2.velocity_samples[0, k])


def test_volume_preservation_of_pullback(fam2):
    spread = fam2.members[0].det_jac_spread(128, 1.0)
    assert spread <= 1e-6


def test_zero_amplitude_family_is_identity():
    fam = blocks.make_shear_family(refine_base=2, grid_n=64, amplitude=0.0,
                                   steps_per_period=4)
    first = fam.theta_samples[0, 0]
    for k in range(1, 5):
        assert np.array_equal(fam.theta_samples[0, k], first)


def test_identity_flow_transport_residual_is_zero():
    fam = blocks.make_shear_family(refine_base=2, grid_n=64, amplitude=0.0,
                                   steps_per_period=2)
    rep = blocks.verify_family(fam, moment_cert_max=576)
    for r in rows(rep, "transport-residual"):
        # identical stencil arrays still round inside the difference quotient:
        # ulp(theta) / (12 h) is ~4e-12, so the floor is roundoff, not zero
        assert r["measured"] <= 1e-10


def test_broken_normalization_is_detected():
    fam = blocks.make_shear_family(refine_base=2, grid_n=64, sample=False)
    fam.members[0].norm_const *= 1.1
    rep = blocks.verify_family(fam, grid_n=64, transport_times=[],
                               moment_cert_max=576)
    for r in rows(rep, "l2-normalization"):
        assert abs(r["measured"] - 1.1) < 1e-3
        assert r["pass"] is False
    assert rep["all_hard_pass"] is False


def test_contraction_ratio_base3():
    fam = blocks.make_shear_family(refine_base=3, grid_n=384, sample=False)
    mem = fam.members[0]
    g = sp.get_grid(384)
    t0 = sp.ScalarField(g, mem.theta_grid(384, 0.0))
    t1 = sp.ScalarField(g, mem.theta_grid(384, 1.0))
    ratio = sp.sobolev_norm(t1, -1.0) / sp.sobolev_norm(t0, -1.0)
    assert ratio <= 0.5
    # calibrated to contract by the refine base per period
    assert abs(ratio - 1.0 / 3.0) < 0.02


# -- refine ---------------------------------------------------------------


def cheap_family(base):
    return blocks.make_shear_family(refine_base=base, grid_n=16 * base,
                                    sample=False)


def test_refine_zero_field_stays_zero():
    fam = cheap_family(2)
    g = sp.get_grid(64)
    out = blocks.refine(sp.ScalarField(g, np.zeros((64, 64))), fam)
    assert not np.any(out.values)


def test_refine_pure_mode_halves_hm1():
    fam = cheap_family(2)
    g = sp.get_grid(256)
    X, Y = g.meshgrid()
    f = sp.ScalarField(g, np.sin(2 * np.pi * (X + Y)))
    r = blocks.refine(f, fam)
    ratio = sp.sobolev_norm(r, -1.0) / sp.sobolev_norm(f, -1.0)
    assert abs(ratio - 0.5) < 1e-13


def test_refine_composes():
    # gather law: twice at base 2 is exactly once at base 4
    fam2c = cheap_family(2)
    fam4 = cheap_family(4)
    rng = np.random.default_rng(31)
    g = sp.get_grid(256)
    f = sp.ScalarField(g, rng.standard_normal((256, 256)))
    twice = blocks.refine(blocks.refine(f, fam2c), fam2c)
    once = blocks.refine(f, fam4)
    assert np.array_equal(twice.values, once.values)


def test_refine_preserves_l2_and_mean_of_pattern(fam2):
    f = fam2.member_theta(0, 0)
    r = blocks.refine(f, fam2)
    assert abs(sp.l2_norm(r) - sp.l2_norm(f)) <= 1e-6
    assert abs(float(r.values.mean())) <= 1e-10


def test_refine_rejects_nondivisible_grid():
    fam = cheap_family(4)
    g = sp.get_grid(130)
    with pytest.raises(ValueError):
        blocks.refine(sp.ScalarField(g, np.zeros((130, 130))), fam)


@settings(max_examples=25, deadline=None)
@given(st.lists(
    st.tuples(st.integers(-10, 10), st.integers(-10, 10),
              st.floats(-2.0, 2.0), st.floats(0.0, 6.0)),
    min_size=1, max_size=6))
def test_refine_halves_hm1_for_band_limited_fields(modes):
    n = 64
    g = sp.get_grid(n)
    X, Y = g.meshgrid()
    vals = np.zeros((n, n))
    for kx, ky, amp, ph in modes:
        if kx == 0 and ky == 0:
            continue
        vals += amp * np.cos(2 * np.pi * (kx * X + ky * Y) + ph)
    f = sp.ScalarField(g, vals)
    base = sp.sobolev_norm(f, -1.0)
    if base < 1e-9:
        return
    fam = cheap_family(2)
    ratio = sp.sobolev_norm(blocks.refine(f, fam), -1.0) / base
    assert abs(ratio - 0.5) < 1e-12


def test_assignment_controls_tiling():
    mems = [blocks.BlockMember([blocks.PhaseSpec(0, 0.2),
                                blocks.PhaseSpec(1, -0.2)], pattern_freq=fp)
            for fp in (1, 2)]
    fam = blocks.BlockFamily(mems, refine_base=2, steps_per_period=2, grid_n=64)
    g = sp.get_grid(128)
    out = blocks.refine(sp.ScalarField(g, np.zeros((128, 128))), fam, row=0)
    tiles = [m.pattern_grid(64) for m in mems]
    # default assignment is (flat + row) mod N over the flat sub-squares
    assert np.array_equal(out.values[:64, :64], tiles[0])
    assert np.array_equal(out.values[:64, 64:], tiles[1])
    assert np.array_equal(out.values[64:, :64], tiles[0])
    assert np.array_equal(out.values[64:, 64:], tiles[1])
    other = blocks.refine(sp.ScalarField(g, np.zeros((128, 128))), fam, row=1)
    assert np.array_equal(other.values[:64, :64], tiles[1])


# -- sub-square indexing --------------------------------------------------


def test_sub_squares_flat_order():
    sq = blocks.sub_squares(2)
    assert [s.flat for s in sq] == [0, 1, 2, 3]
    assert sq[1].offset == (0.0, 0.5)
    assert sq[2].offset == (0.5, 0.0)


def test_sub_square_index_validation():
    with pytest.raises(ValueError):
        blocks.SubSquareIndex(1, (0.0, 0.0))
    with pytest.raises(ValueError):
        blocks.SubSquareIndex(2, (0.3, 0.0))
    with pytest.raises(ValueError):
        blocks.SubSquareIndex(2, (0.0, 1.5))


def test_make_shear_family_validation():
    with pytest.raises(ValueError):
        blocks.make_shear_family(N=0)
    with pytest.raises(ValueError):
        blocks.make_shear_family(refine_base=1)
    with pytest.raises(ValueError):
        blocks.make_shear_family(refine_base=4, grid_n=32)


# -- serialization --------------------------------------------------------


def test_container_roundtrip(tmp_path):
    fam = blocks.make_shear_family(refine_base=2, grid_n=64, steps_per_period=2)
    fam.members[0].norm_const *= 1.25  # make the stored constant distinctive
    path = tmp_path / "fam.bin"
    blocks.save_family(fam, str(path))
    back = blocks.load_family(str(path))
    assert back.refine_base == fam.refine_base
    assert back.steps_per_period == fam.steps_per_period
    assert np.array_equal(back.times, fam.times)
    assert np.array_equal(back.theta_samples, fam.theta_samples)
    assert np.array_equal(back.velocity_samples, fam.velocity_samples)
    assert np.array_equal(back.assignment, fam.assignment)
    assert back.members[0].norm_const == fam.members[0].norm_const
    assert [p.amplitude for p in back.members[0].phases] == \
           [p.amplitude for p in fam.members[0].phases]


def test_container_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTAFAM0" + b"\x00" * 32)
    with pytest.raises(ValueError):
        blocks.load_family(str(path))
