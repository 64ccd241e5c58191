"""Fourier-multiplier calculus on the doubly periodic square [0, L)^2.

Layout conventions
------------------
Physical samples are stored as ``values[i, j] = f(i*dx, j*dx)``, so axis 0
is x1 and axis 1 is x2.  Coefficients use the real-to-complex layout of
``scipy.fft.rfft2``: shape ``(n, n//2 + 1)``; axis 0 carries k1 in FFT order
``0, 1, ..., n/2-1, -n/2, ..., -1`` and axis 1 carries ``k2 = 0, ..., n/2``.
Integer lattice indices are scaled by ``2*pi/L`` to give wavenumbers.

The forward transform is unnormalised and the inverse carries ``1/n**2``:
a pure mode ``exp(i k.x)`` has coefficient ``n**2`` at ``k``.  Parseval then
reads ``||f||_2**2 = (L/n)**2 / n**2 * sum_full |c_k|**2``.
"""
from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.fft

from .errors import ConfigurationError, DomainError, MeanRemovedWarning, ZeroModeError

NORMALIZATION = "forward unnormalized, inverse scaled by 1/n^2"
ZERO_MODE_POLICIES = ("annihilate", "identity", "error")

# relative size below which a mean is treated as roundoff
MEAN_TOL = 1e-12


def _workers():
    try:
        return max(1, int(os.environ.get("FRACBOU_THREADS", "1")))
    except ValueError:
        return 1


def forward(values):
    return scipy.fft.rfft2(values, workers=_workers())


def inverse(coeffs, n):
    return scipy.fft.irfft2(coeffs, s=(n, n), workers=_workers())


@dataclass(frozen=True)
class SpectralGrid:
    """An ``n x n`` periodic grid of period ``length`` and its wavenumber lattice."""

    n: int
    length: float = 2 * math.pi

    @cached_property
    def dx(self):
        return self.length / self.n

    @cached_property
    def cell_area(self):
        return self.dx * self.dx

    @cached_property
    def scale(self):
        """Factor turning integer lattice indices into wavenumbers."""
        return 2 * math.pi / self.length

    @cached_property
    def x(self):
        """Coordinate arrays ``(x1, x2)`` with ``ij`` indexing."""
        axis = np.arange(self.n) * self.dx
        return np.meshgrid(axis, axis, indexing="ij")

    @cached_property
    def k1_index(self):
        return np.fft.fftfreq(self.n, 1.0 / self.n).round().astype(int)[:, None]

    @cached_property
    def k2_index(self):
        return np.arange(self.n // 2 + 1)[None, :]

    @cached_property
    def k1(self):
        return self.k1_index * self.scale

    @cached_property
    def k2(self):
        return self.k2_index * self.scale

    @cached_property
    def k_squared(self):
        return self.k1**2 + self.k2**2

    @cached_property
    def k_magnitude(self):
        return np.sqrt(self.k_squared)

    @cached_property
    def shape(self):
        return (self.n, self.n)

    @cached_property
    def spectral_shape(self):
        return (self.n, self.n // 2 + 1)

    @cached_property
    def multiplicity(self):
        """Number of full-lattice modes each stored half-spectrum entry stands for."""
        w = np.full(self.spectral_shape, 2.0)
        w[:, 0] = 1.0
        w[:, -1] = 1.0
        return w

    @cached_property
    def nyquist_mask(self):
        """True on the self-conjugate lattice lines |k1| = n/2 or k2 = n/2."""
        half = self.n // 2
        return (np.abs(self.k1_index) == half) | (self.k2_index == half)

    @cached_property
    def dealias_mask(self):
        """2/3 rule on the square cutoff: keep max(|k1|, |k2|) <= n/3."""
        cutoff = self.n / 3
        return (np.abs(self.k1_index) <= cutoff) & (self.k2_index <= cutoff)

    def metadata(self):
        half = self.n // 2
        return {
            "n": self.n,
            "length": self.length,
            "k_index_range": [-half, half - 1],
            "wavenumber_scale": self.scale,
            "axis_order": "values[i, j] = f(x1=i*dx, x2=j*dx)",
            "spectral_layout": "rfft2: axis0 k1 in FFT order, axis1 k2 = 0..n/2",
            "normalization": NORMALIZATION,
        }


def make_grid(n, length=2 * math.pi):
    """Build a grid, validating ``n`` (even, >= 8) and ``length`` (> 0)."""
    if isinstance(n, bool) or int(n) != n:
        raise ConfigurationError(f"n must be an integer, got {n!r}")
    n = int(n)
    if n % 2:
        raise ConfigurationError(f"n must be even, got {n}")
    if n < 8:
        raise ConfigurationError(f"n must be at least 8, got {n}")
    if not length > 0 or not math.isfinite(length):
        raise ConfigurationError(f"length must be positive and finite, got {length!r}")
    return SpectralGrid(n, float(length))


class SpectralField:
    """A real scalar field held in physical and/or Fourier representation.

    Either representation is computed lazily from the other and cached; both
    arrays are read-only, so a field never changes after construction.
    """

    def __init__(self, grid, values=None, coeffs=None):
        if values is None and coeffs is None:
            raise ValueError("need values or coeffs")
        self.grid = grid
        self._values = None
        self._coeffs = None
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != grid.shape:
                raise ConfigurationError(f"values shape {values.shape} != grid {grid.shape}")
            self._values = _frozen(values)
        if coeffs is not None:
            coeffs = np.asarray(coeffs, dtype=complex)
            if coeffs.shape != grid.spectral_shape:
                raise ConfigurationError(
                    f"coeffs shape {coeffs.shape} != {grid.spectral_shape}")
            self._coeffs = _frozen(coeffs)

    @classmethod
    def from_values(cls, grid, values):
        return cls(grid, values=values)

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        return cls(grid, coeffs=coeffs)

    @classmethod
    def from_function(cls, grid, func):
        x1, x2 = grid.x
        return cls(grid, values=np.broadcast_to(func(x1, x2), grid.shape))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, coeffs=np.zeros(grid.spectral_shape, dtype=complex))

    @property
    def has_values(self):
        return self._values is not None

    @property
    def has_coeffs(self):
        return self._coeffs is not None

    @property
    def values(self):
        if self._values is None:
            self._values = _frozen(inverse(self._coeffs, self.grid.n))
        return self._values

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = _frozen(forward(self._values))
        return self._coeffs

    @property
    def mean(self):
        return float(self.coeffs[0, 0].real) / self.grid.n**2

    def rms(self):
        """Root mean square, from Parseval."""
        c = self.coeffs
        total = np.sum(self.grid.multiplicity * (c.real**2 + c.imag**2))
        return math.sqrt(total) / self.grid.n**2

    def is_mean_zero(self, tol=MEAN_TOL):
        return abs(self.mean) <= tol * max(self.rms(), 1e-300)

    def _check(self, other):
        if other.grid != self.grid:
            raise ConfigurationError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self.grid, coeffs=self.coeffs + other.coeffs)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self.grid, coeffs=self.coeffs - other.coeffs)
        return NotImplemented

    def __neg__(self):
        return SpectralField(self.grid, coeffs=-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, SpectralField):
            # pointwise product, no dealiasing
            self._check(other)
            return SpectralField(self.grid, values=self.values * other.values)
        if np.isscalar(other):
            if self.has_coeffs:
                return SpectralField(self.grid, coeffs=self.coeffs * other)
            return SpectralField(self.grid, values=self.values * other)
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self):
        rep = "+".join(k for k, v in (("values", self._values), ("coeffs", self._coeffs))
                       if v is not None)
        return f"SpectralField(n={self.grid.n}, {rep})"


def _frozen(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


# --------------------------------------------------------------------------
# Multipliers


@dataclass(frozen=True)
class MultiplierSpec:
    """A Fourier multiplier ``m(k1, k2)`` and how it treats the zero mode.

    ``symbol`` receives broadcastable wavenumber arrays.  On the Nyquist lines
    the symbol is averaged over both lattice representatives so that
    Hermitian-symmetric symbols always yield real output.
    """

    name: str
    symbol: Callable
    zero_mode: str = "annihilate"

    def __post_init__(self):
        if self.zero_mode not in ZERO_MODE_POLICIES:
            raise ConfigurationError(f"unknown zero-mode policy {self.zero_mode!r}")

    def array(self, grid):
        return _symbol_array(self, grid)


@lru_cache(maxsize=512)
def _symbol_array(spec, grid):
    k1, k2 = grid.k1, grid.k2
    half = grid.n // 2
    k1_alt = np.where(grid.k1_index == -half, -k1, k1)
    k2_alt = np.where(grid.k2_index == half, -k2, k2)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.broadcast_to(spec.symbol(k1, k2), grid.spectral_shape).astype(complex)
        nyq = grid.nyquist_mask
        if nyq.any():
            avg = (spec.symbol(k1, k2) + spec.symbol(k1_alt, k2)
                   + spec.symbol(k1, k2_alt) + spec.symbol(k1_alt, k2_alt)) / 4
            avg = np.broadcast_to(avg, grid.spectral_shape)
            s = np.where(nyq, avg, s)
    s = np.array(s)
    if spec.zero_mode == "identity":
        s[0, 0] = 1.0
    else:
        s[0, 0] = 0.0
    off_zero = np.ones(grid.spectral_shape, dtype=bool)
    off_zero[0, 0] = False
    if not np.all(np.isfinite(s[off_zero])):
        raise DomainError(f"symbol {spec.name} is not finite on the lattice")
    s.flags.writeable = False
    return s


@lru_cache(maxsize=None)
def fractional_laplacian_multiplier(s, zero_mode="annihilate"):
    """``Lambda^s`` with symbol ``|k|^s``; ``s = 0`` is the identity."""
    s = float(s)
    if s == 0:
        return MultiplierSpec("Lambda^0", lambda k1, k2: np.ones(np.broadcast(k1, k2).shape),
                              "identity")
    return MultiplierSpec(f"Lambda^{s:g}", lambda k1, k2: np.hypot(k1, k2) ** s, zero_mode)


@lru_cache(maxsize=None)
def derivative_multiplier(axis):
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    if axis == 0:
        return MultiplierSpec("d1", lambda k1, k2: 1j * k1 + 0 * k2)
    return MultiplierSpec("d2", lambda k1, k2: 1j * k2 + 0 * k1)


@lru_cache(maxsize=None)
def riesz_alpha_multiplier(alpha):
    """``R_alpha = Lambda^{-alpha} d1`` with symbol ``i k1 |k|^{-alpha}``."""
    alpha = float(alpha)
    return MultiplierSpec(f"R_{alpha:g}",
                          lambda k1, k2: 1j * k1 * np.hypot(k1, k2) ** (-alpha))


@lru_cache(maxsize=None)
def riesz_transform_multiplier(axis):
    """``d_axis Lambda^{-1}``."""
    if axis == 0:
        return MultiplierSpec("Riesz1", lambda k1, k2: 1j * k1 / np.hypot(k1, k2))
    return MultiplierSpec("Riesz2", lambda k1, k2: 1j * k2 / np.hypot(k1, k2))


@lru_cache(maxsize=None)
def inverse_laplacian_multiplier(zero_mode="annihilate"):
    return MultiplierSpec("inv_laplacian", lambda k1, k2: -1.0 / (k1 * k1 + k2 * k2),
                          zero_mode)


def compose(*specs):
    """Product of multipliers.  Zero mode: identity only if every factor is."""
    policies = {m.zero_mode for m in specs}
    if policies == {"identity"}:
        zero = "identity"
    elif "error" in policies:
        zero = "error"
    else:
        zero = "annihilate"
    symbols = [m.symbol for m in specs]

    def symbol(k1, k2):
        out = 1.0
        for sym in symbols:
            out = out * sym(k1, k2)
        return out

    return MultiplierSpec("*".join(m.name for m in specs), symbol, zero)


def apply_multiplier(f, m):
    """Multiply the coefficients of ``f`` by the symbol of ``m``."""
    if m.zero_mode == "error" and not f.is_mean_zero():
        raise ZeroModeError(f"operator {m.name} undefined on non-mean-zero field")
    return SpectralField(f.grid, coeffs=f.coeffs * m.array(f.grid))


def fractional_laplacian(f, s, zero_mode="annihilate"):
    if not -2 <= s <= 2:
        raise DomainError(f"order s={s} outside [-2, 2]")
    return apply_multiplier(f, fractional_laplacian_multiplier(s, zero_mode))


def derivative(f, axis):
    return apply_multiplier(f, derivative_multiplier(axis))


def gradient(f):
    return derivative(f, 0), derivative(f, 1)


def divergence(u1, u2):
    return derivative(u1, 0) + derivative(u2, 1)


def curl(u1, u2):
    """Scalar curl ``d1 u2 - d2 u1``."""
    return derivative(u2, 0) - derivative(u1, 1)


def riesz_alpha(f, alpha):
    return apply_multiplier(f, riesz_alpha_multiplier(alpha))


def streamfunction(omega):
    """Solve ``Laplace psi = omega`` with mean-zero ``psi``."""
    if not omega.is_mean_zero():
        warnings.warn("nonzero mean removed before inverting the Laplacian",
                      MeanRemovedWarning, stacklevel=2)
    return apply_multiplier(omega, inverse_laplacian_multiplier())


def biot_savart(omega):
    """Velocity ``u = grad_perp Laplace^{-1} omega = (-d2 psi, d1 psi)``."""
    if not omega.is_mean_zero():
        warnings.warn("vorticity has nonzero mean; it was annihilated",
                      MeanRemovedWarning, stacklevel=2)
    psi = apply_multiplier(omega, inverse_laplacian_multiplier())
    return -derivative(psi, 1), derivative(psi, 0)


def dealias(f):
    return SpectralField(f.grid, coeffs=f.coeffs * f.grid.dealias_mask)


def spectral_max_norm(f):
    """Largest coefficient magnitude, scaled to mode amplitude (``|c|/n^2``)."""
    return float(np.abs(f.coeffs).max()) / f.grid.n**2


# --------------------------------------------------------------------------
# Norms


def lebesgue_norm(f, p, oversample=1):
    """``||f||_{L^p}`` by equal-weight grid quadrature.

    Quadrature of ``|f|^p`` is exact when ``|f|^p`` is a trigonometric
    polynomial below the (oversampled) Nyquist band, e.g. even ``p`` with
    ``p * K < oversample * n`` for a field of bandwidth ``K``; otherwise the
    error decays with the spectral tail of ``|f|^p``.  ``p = inf`` returns the
    largest sampled ``|f|`` (see :func:`sup_norm` for the continuum sup).
    """
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if oversample != 1:
        f = upsample(f, oversample)
    v = f.values
    if math.isinf(p):
        return float(np.abs(v).max())
    if p == 2:
        total = np.sum(v * v)
    else:
        total = np.sum(np.abs(v) ** p)
    return float((total * f.grid.cell_area) ** (1.0 / p))


def l2_norm_spectral(f):
    """``||f||_{L^2}`` from Parseval (no quadrature)."""
    return f.rms() * f.grid.length


def _full_spectrum(f):
    """Complex full-lattice spectrum with the Nyquist lines split symmetrically.

    Returns ``(c, k1, k2)`` with integer k in ``[-n/2, n/2]`` so that
    ``f(x) = Re sum c exp(i k.x) / n^2`` is the real trigonometric interpolant.
    """
    n = f.grid.n
    half = n // 2
    full = scipy.fft.fft2(f.values, workers=_workers())
    big = np.zeros((n + 1, n + 1), dtype=complex)
    idx = np.fft.fftfreq(n, 1.0 / n).round().astype(int)
    rows = idx + half
    big[np.ix_(rows, rows)] = full
    # split the -n/2 lines equally between -n/2 and +n/2
    big[0, :] *= 0.5
    big[-1, :] = big[0, :]
    big[:, 0] *= 0.5
    big[:, -1] = big[:, 0]
    k = np.arange(-half, half + 1)
    return big, k


def upsample(f, factor):
    """Band-limited interpolation of ``f`` onto a grid ``factor`` times finer."""
    factor = int(factor)
    if factor == 1:
        return f
    n = f.grid.n
    m = factor * n
    big, k = _full_spectrum(f)
    target = np.zeros((m, m), dtype=complex)
    pos = k % m
    target[np.ix_(pos, pos)] += big * factor**2
    values = scipy.fft.ifft2(target, workers=_workers()).real
    return SpectralField(make_grid(m, f.grid.length), values=values)


def sup_norm(f, refine=True, candidates=4):
    """``sup |f|`` of the trigonometric interpolant.

    The grid maximum is refined by Newton iterations on the interpolant at the
    ``candidates`` largest grid samples; the result is never below the grid
    maximum.
    """
    v = f.values
    a = np.abs(v)
    best = float(a.max())
    if not refine or best == 0.0:
        return best
    big, k = _full_spectrum(f)
    n = f.grid.n
    keep = np.abs(big) > 1e-15 * np.abs(big).max()
    i1, i2 = np.nonzero(keep)
    c = big[i1, i2] / n**2
    kk1 = k[i1] * f.grid.scale
    kk2 = k[i2] * f.grid.scale
    flat = np.argsort(a, axis=None)[::-1][:candidates]
    dx = f.grid.dx
    for idx in flat:
        i, j = np.unravel_index(idx, a.shape)
        x = np.array([i * dx, j * dx])
        sign = 1.0 if v[i, j] >= 0 else -1.0
        for _ in range(30):
            e = c * np.exp(1j * (kk1 * x[0] + kk2 * x[1]))
            g = np.array([np.sum(1j * kk1 * e).real, np.sum(1j * kk2 * e).real])
            h11 = -np.sum(kk1 * kk1 * e).real
            h12 = -np.sum(kk1 * kk2 * e).real
            h22 = -np.sum(kk2 * kk2 * e).real
            hess = np.array([[h11, h12], [h12, h22]])
            try:
                step = np.linalg.solve(hess, g)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)) or np.hypot(*step) > dx:
                break
            x = x - step
            if np.hypot(*step) < 1e-14:
                break
        if np.hypot(x[0] - i * dx, x[1] - j * dx) <= 2 * dx:
            val = sign * np.sum(c * np.exp(1j * (kk1 * x[0] + kk2 * x[1]))).real
            best = max(best, float(val))
    return best


# --------------------------------------------------------------------------
# Snapshot files

SNAPSHOT_MAGIC = "FRACBOU-SNAPSHOT 1"


def save_snapshot(path, field, fmt="binary", **extra):
    """Write ``field`` as a header line plus row-major physical values.

    Layout: a magic line, one line of JSON header, then either raw
    little-endian float64 (``fmt='binary'``) or one ``repr``-exact decimal
    per line (``fmt='text'``).
    """
    if fmt not in ("binary", "text"):
        raise ValueError(f"unknown snapshot format {fmt!r}")
    header = {
        "n": field.grid.n,
        "length": field.grid.length,
        "representation": "physical",
        "normalization": NORMALIZATION,
        "order": "row-major, values[i, j] = f(x1=i*dx, x2=j*dx)",
        "format": fmt,
        "dtype": "float64",
        "byte_order": "little",
    }
    header.update(extra)
    path = Path(path)
    head = (SNAPSHOT_MAGIC + "\n" + json.dumps(header, sort_keys=True) + "\n").encode()
    values = np.ascontiguousarray(field.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(head)
        if fmt == "binary":
            fh.write(values.tobytes(order="C"))
        else:
            fh.write("".join(f"{x!r}\n" for x in values.ravel().tolist()).encode())
    return path


def load_snapshot(path):
    """Read a snapshot; returns ``(field, header)``."""
    with open(path, "rb") as fh:
        magic = fh.readline().decode().strip()
        if magic != SNAPSHOT_MAGIC:
            raise ConfigurationError(f"{path}: not a snapshot file")
        header = json.loads(fh.readline().decode())
        body = fh.read()
    n = int(header["n"])
    if header.get("format", "binary") == "binary":
        values = np.frombuffer(body, dtype="<f8")
    else:
        values = np.array([float(x) for x in body.decode().split()])
    if values.size != n * n:
        raise ConfigurationError(f"{path}: expected {n * n} values, found {values.size}")
    grid = make_grid(n, float(header["length"]))
    return SpectralField(grid, values=values.reshape(n, n).astype(float)), header
