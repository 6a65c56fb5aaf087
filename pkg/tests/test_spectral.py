import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusmix import spectral as sp


ROOT2 = np.sqrt(2.0)


def make_field(n, fn):
    g = sp.get_grid(n)
    X, Y = g.meshgrid()
    return sp.ScalarField(g, fn(X, Y))


def brute_force_coeff(values, kx, ky):
    """Direct O(n^2) DFT coefficient, the independent oracle for transform()."""
    n = values.shape[0]
    i = np.arange(n)
    ex = np.exp(-2j * np.pi * kx * i / n)
    ey = np.exp(-2j * np.pi * ky * i / n)
    return (values * np.outer(ex, ey)).sum() / n**2


def test_cosine_has_exactly_two_coefficients():
    f = make_field(64, lambda x, y: np.cos(2 * np.pi * x))
    hat = f.hat
    mags = np.abs(hat)
    # coefficient 1/2 at kx = +1 (row 1) and kx = -1 (row 63), ky = 0
    assert abs(hat[1, 0] - 0.5) < 1e-14
    assert abs(hat[63, 0] - 0.5) < 1e-14
    mags[1, 0] = mags[63, 0] = 0.0
    assert mags.max() < 1e-14


def test_transform_matches_brute_force_dft():
    rng = np.random.default_rng(7)
    n = 16
    f = sp.ScalarField(sp.get_grid(n), rng.standard_normal((n, n)))
    for kx, ky in [(0, 0), (1, 0), (3, 2), (7, 5), (15, 8), (8, 8)]:
        want = brute_force_coeff(f.values, kx, ky)
        got = f.hat[kx % n, ky] if ky <= n // 2 else None
        assert got is not None
        assert abs(got - want) < 1e-12


def test_parseval_identity():
    rng = np.random.default_rng(12)
    n = 32
    f = sp.ScalarField(sp.get_grid(n), rng.standard_normal((n, n)))
    direct = np.mean(f.values**2)
    assert abs(sp.spectral_energy(f) - direct) < 1e-12 * direct


def test_single_mode_sobolev_norms():
    # sin(2 pi x): L2 = 1/sqrt(2), Hs = (2 pi)^s / sqrt(2)
    f = make_field(64, lambda x, y: np.sin(2 * np.pi * x))
    assert abs(sp.sobolev_norm(f, 0.0) - 1 / ROOT2) < 1e-13
    assert abs(sp.sobolev_norm(f, -1.0) - 1 / (2 * np.pi * ROOT2)) < 1e-13
    assert abs(sp.sobolev_norm(f, 1.0) - 2 * np.pi / ROOT2) < 1e-12
    # frozen decimal values
    assert abs(sp.sobolev_norm(f, -1.0) - 0.11253953951963827) < 1e-12
    assert abs(sp.sobolev_norm(f, 1.0) - 4.442882938158366) < 1e-12


def test_mode_three_scales_like_one_third():
    f1 = make_field(128, lambda x, y: np.sin(2 * np.pi * x))
    f3 = make_field(128, lambda x, y: np.sin(2 * np.pi * 3 * x))
    r = sp.sobolev_norm(f3, -1.0) / sp.sobolev_norm(f1, -1.0)
    assert abs(r - 1.0 / 3.0) < 1e-13


def test_negative_sobolev_requires_mean_zero():
    f = make_field(32, lambda x, y: 1.0 + np.sin(2 * np.pi * x))
    with pytest.raises(ValueError):
        sp.sobolev_norm(f, -1.0)


def test_projection_partitions_energy():
    rng = np.random.default_rng(5)
    n = 64
    f = sp.ScalarField(sp.get_grid(n), rng.standard_normal((n, n)))
    lo = sp.project(f, 7.0, "low")
    hi = sp.project(f, 7.0, "high")
    e = sp.spectral_energy(f)
    assert abs(sp.spectral_energy(lo) + sp.spectral_energy(hi) - e) < 1e-12 * e
    np.testing.assert_allclose(lo.values + hi.values, f.values, atol=1e-12)


def test_projection_tie_goes_low():
    # mode (3,4): |k| = 5 exactly; cutoff at 5 keeps it
    f = make_field(64, lambda x, y: np.sin(2 * np.pi * (3 * x + 4 * y)))
    kept = sp.project(f, 5.0, "low")
    assert abs(sp.sobolev_norm(kept, 0.0) - sp.sobolev_norm(f, 0.0)) < 1e-13
    gone = sp.project(f, 5.0, "high")
    assert sp.sobolev_norm(gone, 0.0) < 1e-13


def test_interpolation_single_mode_is_tight():
    f = make_field(64, lambda x, y: np.sin(2 * np.pi * (x + 2 * y)))
    rep = sp.interpolation_report(f)
    assert abs(rep["slack"]) < 1e-12 * rep["l2_sq"]


def test_interpolation_two_scales_strict():
    f = make_field(64, lambda x, y: np.sin(2 * np.pi * x) + 0.5 * np.sin(2 * np.pi * 8 * y))
    rep = sp.interpolation_report(f)
    assert rep["slack"] > 1e-3 * rep["l2_sq"]


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_interpolation_never_violated(seed):
    rng = np.random.default_rng(seed)
    n = 32
    g = sp.get_grid(n)
    vals = rng.standard_normal((n, n))
    vals -= vals.mean()
    rep = sp.interpolation_report(sp.ScalarField(g, vals))
    assert rep["slack"] >= -1e-10 * rep["l2_sq"]


def test_laplacian_eigenfunction():
    f = make_field(64, lambda x, y: np.sin(2 * np.pi * x))
    lap = sp.laplacian(f)
    np.testing.assert_allclose(lap.values, -4 * np.pi**2 * f.values, atol=1e-10)


def test_gradient_closed_form():
    f = make_field(64, lambda x, y: np.sin(2 * np.pi * x))
    gr = sp.gradient(f)
    g = sp.get_grid(64)
    X, _ = g.meshgrid()
    np.testing.assert_allclose(gr.u1, 2 * np.pi * np.cos(2 * np.pi * X), atol=1e-10)
    np.testing.assert_allclose(gr.u2, 0.0, atol=1e-12)


def test_advect_constant_scalar_is_zero():
    g = sp.get_grid(32)
    X, Y = g.meshgrid()
    v = sp.VelocityField(g, np.sin(2 * np.pi * Y), np.cos(2 * np.pi * X))
    f = sp.ScalarField(g, np.full((32, 32), 3.7))
    out = sp.advect_term(v, f)
    assert np.abs(out.values).max() < 1e-13


def test_advect_closed_form():
    # v = (1, 0), f = sin(2 pi x): v.grad f = 2 pi cos(2 pi x)
    g = sp.get_grid(64)
    X, _ = g.meshgrid()
    v = sp.VelocityField(g, np.ones((64, 64)), np.zeros((64, 64)))
    f = sp.ScalarField(g, np.sin(2 * np.pi * X))
    out = sp.advect_term(v, f)
    np.testing.assert_allclose(out.values, 2 * np.pi * np.cos(2 * np.pi * X), atol=1e-10)


def test_divergence_free_shear():
    g = sp.get_grid(64)
    _, Y = g.meshgrid()
    v = sp.VelocityField(g, np.sin(2 * np.pi * Y), np.zeros((64, 64)))
    assert sp.divergence_rel(v) < 1e-13


def test_curl_biot_savart_roundtrip():
    rng = np.random.default_rng(3)
    n = 64
    g = sp.get_grid(n)
    vals = rng.standard_normal((n, n))
    vals -= vals.mean()
    w = sp.dealias_field(sp.ScalarField(g, vals))
    v = sp.velocity_from_vorticity(w)
    assert sp.divergence_rel(v) < 1e-12
    back = sp.curl(v)
    np.testing.assert_allclose(back.values, w.values, atol=1e-10)


def test_fields_are_immutable():
    f = make_field(16, lambda x, y: x * 0.0 + 1.0)
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0


def test_roundtrip_transform():
    rng = np.random.default_rng(11)
    n = 48
    g = sp.get_grid(n)
    f = sp.ScalarField(g, rng.standard_normal((n, n)))
    back = sp.field_from_hat(g, f.hat)
    np.testing.assert_allclose(back.values, f.values, atol=1e-12)


def test_top_octave_fraction_flags_rough_fields():
    smooth = make_field(64, lambda x, y: np.sin(2 * np.pi * x))
    assert sp.top_octave_fraction(smooth) < 1e-30
    rough = make_field(64, lambda x, y: np.sin(2 * np.pi * 15 * x))
    assert sp.top_octave_fraction(rough) > 0.99
