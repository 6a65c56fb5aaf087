"""Pseudo-spectral core on the unit periodic square [0,1)^2.

Conventions (fixed across the package):
  * grid: n x n uniform, values[i, j] = f(i/n, j/n)
  * coefficients: c_k = (1/n^2) sum_x f(x) exp(-2 pi i k.x)  (rfft2, norm="forward"),
    i.e. c_k is the analytic Fourier series coefficient of the trigonometric
    interpolant; axis 0 carries kx in fft order, axis 1 carries ky = 0..n/2
  * derivative multiplier 2*pi*i*k, homogeneous Sobolev multiplier (2 pi |k|)^s
  * dealiasing: square two-thirds rule, |kx|,|ky| <= floor(n/3)
  * sharp frequency projections use the Euclidean modulus |k|, ties kept on the
    low side
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

try:
    from scipy import fft as _fft
except ImportError:  # pragma: no cover
    _fft = np.fft

_WORKERS = 1


def set_fft_workers(n: int):
    """Thread budget for FFT calls (scipy honors it; harmless otherwise)."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def _rfft2(a):
    if _fft is np.fft:
        return np.fft.rfft2(a, norm="forward")
    return _fft.rfft2(a, norm="forward", workers=_WORKERS)


def _irfft2(c, shape):
    if _fft is np.fft:
        return np.fft.irfft2(c, s=shape, norm="forward")
    return _fft.irfft2(c, s=shape, norm="forward", workers=_WORKERS)


class Grid:
    """Immutable n x n grid with cached wavenumber/weight arrays."""

    __slots__ = ("n", "x", "kx", "ky", "k2", "kmag", "parseval_w", "dealias_mask",
                 "dealias_kmax")

    def __init__(self, n: int):
        if n < 4 or n % 2 != 0:
            raise ValueError("grid size must be even and >= 4")
        self.n = n
        self.x = np.arange(n) / n
        self.kx = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)  # signed ints
        self.ky = np.arange(n // 2 + 1, dtype=np.int64)
        kx2 = (self.kx.astype(np.float64) ** 2)[:, None]
        ky2 = (self.ky.astype(np.float64) ** 2)[None, :]
        self.k2 = kx2 + ky2
        self.kmag = np.sqrt(self.k2)
        w = np.full((n, n // 2 + 1), 2.0)
        w[:, 0] = 1.0
        w[:, -1] = 1.0  # n even: ky = n/2 column is self-conjugate
        self.parseval_w = w
        cut = n // 3
        self.dealias_kmax = cut
        self.dealias_mask = (np.abs(self.kx)[:, None] <= cut) & (self.ky[None, :] <= cut)
        for a in (self.x, self.kx, self.ky, self.k2, self.kmag, self.parseval_w,
                  self.dealias_mask):
            a.flags.writeable = False

    def __repr__(self):
        return f"Grid({self.n})"

    def __eq__(self, other):
        return isinstance(other, Grid) and other.n == self.n

    def __hash__(self):
        return hash(("Grid", self.n))

    def meshgrid(self):
        """(X, Y) with X[i,j] = i/n, Y[i,j] = j/n."""
        return np.meshgrid(self.x, self.x, indexing="ij")


@lru_cache(maxsize=32)
def get_grid(n: int) -> Grid:
    return Grid(n)


def _freeze(a):
    # always take an owned copy so we never mutate a caller's writeable flag
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    a.flags.writeable = False
    return a


class ScalarField:
    """Real scalar sampled on a Grid.  Values are immutable after construction;
    every operation returns a new field.  The spectrum is memoized lazily,
    which is safe precisely because the values cannot change."""

    __slots__ = ("grid", "values", "_hat")

    def __init__(self, grid: Grid, values: np.ndarray, _hat: np.ndarray | None = None):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (grid.n, grid.n):
            raise ValueError(f"values shape {values.shape} does not match grid {grid.n}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        self.grid = grid
        self.values = _freeze(values)
        if _hat is not None:
            _hat = _hat.copy()
            _hat.flags.writeable = False
        self._hat = _hat

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            h = _rfft2(self.values)
            h.flags.writeable = False
            self._hat = h
        return self._hat

    def mean(self) -> float:
        return float(self.values.mean())

    def __repr__(self):
        return f"ScalarField(n={self.grid.n})"


class VelocityField:
    """Pair of scalar components (u1, u2) on a shared grid."""

    __slots__ = ("grid", "u1", "u2")

    def __init__(self, grid: Grid, u1, u2):
        u1 = np.asarray(u1, dtype=np.float64)
        u2 = np.asarray(u2, dtype=np.float64)
        if u1.shape != (grid.n, grid.n) or u2.shape != (grid.n, grid.n):
            raise ValueError("component shape mismatch")
        self.grid = grid
        self.u1 = _freeze(u1.copy())
        self.u2 = _freeze(u2.copy())

    def max_speed(self) -> float:
        return float(np.sqrt(self.u1 ** 2 + self.u2 ** 2).max())


def field_from_hat(grid: Grid, hat: np.ndarray) -> ScalarField:
    return ScalarField(grid, _irfft2(hat, (grid.n, grid.n)), _hat=np.asarray(hat))


def transform(field: ScalarField) -> np.ndarray:
    """Forward transform; returns the (frozen) coefficient array."""
    return field.hat


def spectral_energy(field: ScalarField) -> float:
    """sum_k |c_k|^2 over the full (conjugate-completed) spectrum."""
    g = field.grid
    return float((g.parseval_w * np.abs(field.hat) ** 2).sum())


def l2_norm(field: ScalarField) -> float:
    """L2([0,1]^2) norm via the discrete quadrature (1/n^2) sum |f|^2."""
    return float(np.sqrt(np.mean(field.values ** 2)))


def sobolev_norm(field: ScalarField, s: float) -> float:
    """Homogeneous Sobolev norm with multiplier (2 pi |k|)^s.

    s = 0 gives the plain L2 norm (mean mode included).  For s < 0 the field
    must be mean-zero: the k = 0 mode carries no meaning under a negative
    power and the call raises otherwise.
    """
    g = field.grid
    hat = field.hat
    if s == 0:
        return float(np.sqrt((g.parseval_w * np.abs(hat) ** 2).sum()))
    amp2 = g.parseval_w * np.abs(hat) ** 2
    if s < 0:
        scale = np.sqrt(amp2.sum()) + 1e-300
        if abs(hat[0, 0].real) > 1e-10 * max(scale, 1e-30):
            raise ValueError("negative-order Sobolev norm needs a mean-zero field")
    mult = np.zeros_like(g.k2)
    nz = g.k2 > 0
    mult[nz] = (2.0 * np.pi * g.kmag[nz]) ** (2.0 * s)
    return float(np.sqrt((amp2 * mult).sum()))


def project(field: ScalarField, lam: float, side: str = "low") -> ScalarField:
    """Sharp Euclidean frequency cutoff: keep |k| <= lam ("low") or |k| > lam ("high").

    Ties (|k| exactly lam) belong to the low side.  The two sides partition the
    energy exactly: project(f, lam, "low") + project(f, lam, "high") == f.
    """
    g = field.grid
    mask = g.k2 <= lam * lam
    if side == "high":
        mask = ~mask
    elif side != "low":
        raise ValueError("side must be 'low' or 'high'")
    return field_from_hat(g, field.hat * mask)


def band_fraction(field: ScalarField, lo: float, hi: float) -> float:
    """Fraction of spectral energy with lo < |k| <= hi (0 if the field is null)."""
    g = field.grid
    amp2 = g.parseval_w * np.abs(field.hat) ** 2
    total = amp2.sum()
    if total == 0.0:
        return 0.0
    band = (g.k2 > lo * lo) & (g.k2 <= hi * hi)
    return float(amp2[band].sum() / total)


def top_octave_fraction(field: ScalarField) -> float:
    """Energy fraction in the top octave below the dealias cutoff.

    The resolution-quarantine flag: transported scalars whose spectra push
    mass here are under-resolved and their dissipation numbers suspect.
    """
    kc = field.grid.dealias_kmax
    return band_fraction(field, kc / 2.0, float(kc))


def interpolation_report(field: ScalarField) -> dict:
    """Check ||f||_{L2}^2 <= ||f||_{H^-1} ||f||_{H^1} (mean-zero interpolation).

    Returns the three measured quantities and the slack = product - l2^2,
    which is >= 0 up to roundoff for any mean-zero field (Cauchy-Schwarz in
    k-space), with equality exactly for single-|k| fields.
    """
    l2 = sobolev_norm(field, 0.0)
    hm1 = sobolev_norm(field, -1.0)
    h1 = sobolev_norm(field, 1.0)
    prod = hm1 * h1
    return {
        "l2_sq": l2 * l2,
        "hm1": hm1,
        "h1": h1,
        "product": prod,
        "slack": prod - l2 * l2,
    }


def gradient(field: ScalarField) -> VelocityField:
    g = field.grid
    ikx = 2.0 * np.pi * 1j * g.kx[:, None]
    iky = 2.0 * np.pi * 1j * g.ky[None, :]
    fx = _irfft2(field.hat * ikx, (g.n, g.n))
    fy = _irfft2(field.hat * iky, (g.n, g.n))
    return VelocityField(g, fx, fy)


def laplacian(field: ScalarField) -> ScalarField:
    g = field.grid
    return field_from_hat(g, field.hat * (-4.0 * np.pi ** 2 * g.k2))


def dealias_field(field: ScalarField) -> ScalarField:
    return field_from_hat(field.grid, field.hat * field.grid.dealias_mask)


def advect_term(v: VelocityField, f: ScalarField) -> ScalarField:
    """Dealiased v . grad f (advective form, 2/3-rule on inputs and output)."""
    g = f.grid
    if v.grid != g:
        raise ValueError("velocity and scalar live on different grids")
    mask = g.dealias_mask
    fh = f.hat * mask
    ikx = 2.0 * np.pi * 1j * g.kx[:, None]
    iky = 2.0 * np.pi * 1j * g.ky[None, :]
    fx = _irfft2(fh * ikx, (g.n, g.n))
    fy = _irfft2(fh * iky, (g.n, g.n))
    u1 = _irfft2(_rfft2(v.u1) * mask, (g.n, g.n))
    u2 = _irfft2(_rfft2(v.u2) * mask, (g.n, g.n))
    prod = u1 * fx + u2 * fy
    return field_from_hat(g, _rfft2(prod) * mask)


def divergence(v: VelocityField) -> ScalarField:
    g = v.grid
    ikx = 2.0 * np.pi * 1j * g.kx[:, None]
    iky = 2.0 * np.pi * 1j * g.ky[None, :]
    out = _rfft2(v.u1) * ikx + _rfft2(v.u2) * iky
    return field_from_hat(g, out)


def curl(v: VelocityField) -> ScalarField:
    """Scalar vorticity d(u2)/dx - d(u1)/dy."""
    g = v.grid
    ikx = 2.0 * np.pi * 1j * g.kx[:, None]
    iky = 2.0 * np.pi * 1j * g.ky[None, :]
    out = _rfft2(v.u2) * ikx - _rfft2(v.u1) * iky
    return field_from_hat(g, out)


def velocity_from_vorticity(w: ScalarField) -> VelocityField:
    """Biot-Savart on the torus: v = grad^perp (Delta^-1 w), mean flow zero."""
    g = w.grid
    wh = w.hat
    inv = np.zeros_like(g.k2)
    nz = g.k2 > 0
    inv[nz] = 1.0 / (2.0 * np.pi * g.k2[nz])
    u1 = _irfft2(1j * g.ky[None, :] * inv * wh, (g.n, g.n))
    u2 = _irfft2(-1j * g.kx[:, None].astype(np.float64) * inv * wh, (g.n, g.n))
    return VelocityField(g, u1, u2)


def divergence_rel(v: VelocityField) -> float:
    """Spectral divergence norm relative to the gradient scale of v."""
    g = v.grid
    d = l2_norm(divergence(v))
    gs = np.sqrt(sobolev_norm(ScalarField(g, v.u1), 1.0) ** 2
                 + sobolev_norm(ScalarField(g, v.u2), 1.0) ** 2)
    if gs == 0.0:
        return 0.0
    return float(d / gs)
