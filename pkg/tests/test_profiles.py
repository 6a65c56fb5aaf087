import numpy as np
import pytest

from torusmix import profiles as pf


def test_smoothstep_endpoints_exact():
    assert pf.smoothstep(0.0) == 0.0
    assert pf.smoothstep(1.0) == 1.0
    assert pf.smoothstep(-3.0) == 0.0
    assert pf.smoothstep(2.0) == 1.0


def test_smoothstep_symmetry():
    # phi is symmetric about 1/2, so S(s) + S(1-s) = 1
    s = np.linspace(0.0, 1.0, 1001)
    np.testing.assert_allclose(pf.smoothstep(s) + pf.smoothstep(1.0 - s), 1.0, atol=1e-13)


def test_smoothstep_matches_quadrature():
    # independent oracle: dense trapezoid of the bump
    s = np.linspace(0.0, 1.0, 200001)
    dense = np.concatenate(([0.0], np.cumsum((pf.bump(s[1:]) + pf.bump(s[:-1])) / 2.0 * (s[1] - s[0]))))
    dense /= dense[-1]
    probe = np.linspace(0.0, 1.0, 97)
    got = pf.smoothstep(probe)
    want = np.interp(probe, s, dense)
    np.testing.assert_allclose(got, want, atol=2e-10)


def test_smoothstep_monotone():
    # Hermite tails can wiggle at the ~1e-60 level where the bump underflows;
    # anything beyond that would be a real interpolation bug.
    s = np.linspace(0.0, 1.0, 5000)
    v = pf.smoothstep(s)
    assert np.all(np.diff(v) >= -1e-50)
    assert np.all(v >= -1e-50) and np.all(v <= 1.0 + 1e-15)


@pytest.mark.parametrize("fn,dfn", [
    (pf.smoothstep, pf.smoothstep_d1),
    (pf.smoothstep_d1, pf.smoothstep_d2),
    (pf.smoothstep_d2, pf.smoothstep_d3),
])
def test_derivative_chain_finite_difference(fn, dfn):
    s = np.linspace(0.05, 0.95, 37)
    h = 1e-6
    fd = (fn(s + h) - fn(s - h)) / (2.0 * h)
    np.testing.assert_allclose(fd, dfn(s), rtol=5e-7, atol=5e-7)


def test_bump_closed_forms_consistent():
    s = np.linspace(0.02, 0.98, 53)
    h = 1e-6
    np.testing.assert_allclose((pf.bump(s + h) - pf.bump(s - h)) / (2 * h), pf.bump_d1(s), rtol=1e-6, atol=1e-12)
    np.testing.assert_allclose((pf.bump_d1(s + h) - pf.bump_d1(s - h)) / (2 * h), pf.bump_d2(s), rtol=1e-5, atol=1e-9)


def test_plateau_support_and_flat_top():
    s = np.linspace(0.0, 1.0, 2001)
    p = pf.plateau(s, 0.0625, 0.3)
    assert np.all(p[s <= 0.0625] == 0.0)
    assert np.all(p[s >= 1.0 - 0.0625] == 0.0)
    flat = (s >= 0.0625 + 0.3) & (s <= 1.0 - 0.0625 - 0.3)
    np.testing.assert_allclose(p[flat], 1.0, atol=1e-15)


def test_plateau_reflection_bit_exact_on_dyadic_grid():
    # on grids j/N with N a power of two, 1 - j/N is exact, so the two
    # smoothstep factors swap and the product is bit identical; the exact
    # mean-zero property of the scalar pattern leans on this
    n = 2048
    s = np.arange(n + 1) / n
    p = pf.plateau(s, 0.0625, 0.3)
    np.testing.assert_array_equal(p, p[::-1])


def test_antiderivative_table_sin_oracle():
    tab = pf.antiderivative_table(lambda s: np.sin(2 * np.pi * s))
    probe = np.linspace(0.0, 1.0, 313)
    want = (1.0 - np.cos(2 * np.pi * probe)) / (2 * np.pi)
    np.testing.assert_allclose(tab(probe), want, atol=1e-12)


def test_bump_mass_value():
    # frozen reference: mpmath.quad at 30 digits gives 0.00702985840660965623924...
    assert abs(pf.BUMP_MASS - 0.0070298584066096562) < 1e-15
