"""Dyadic frequency decomposition, Besov norms and commutator measurements.

The blocks are radial multipliers built from the smooth bump

    chi(r) = h(2 - r) * h(r - 1/2),   h(x) = exp(-1/x) for x > 0, else 0,

normalised by ``S(r) = sum_i chi(2^-i r)`` (scale invariant, at most two
nonzero terms), so ``phi_j(xi) = chi(2^-j |xi|) / S(|xi|)`` is supported in
the annulus ``2^(j-1) < |xi| < 2^(j+1)`` and ``sum_j phi_j = 1`` off the
origin.  On a finite grid the top block ``j_max`` closes the partition: it
equals ``phi_{j_max}`` below ``2^j_max`` and 1 above, so every lattice mode is
accounted for.  The inhomogeneous low block ``Psi`` (index -1) is the mirror
construction: ``1 - phi_0`` below 1 and 0 above.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import spectral as sp
from .errors import ConfigurationError, DomainError
from .spectral import SpectralField


def _h(x):
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def bump(r):
    """The unnormalised bump ``chi``; support is the open interval (1/2, 2)."""
    r = np.asarray(r, dtype=float)
    return _h(2.0 - r) * _h(r - 0.5)


def _normaliser(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    m = np.floor(np.log2(r[pos]))
    total = np.zeros_like(m)
    for shift in (-1, 0, 1):
        total += bump(r[pos] * np.exp2(-(m + shift)))
    out[pos] = total
    return out


def phi(j, r):
    """Radial profile of block ``j`` (no closing), evaluated at radii ``r``."""
    r = np.asarray(r, dtype=float)
    norm = _normaliser(r)
    out = np.zeros_like(r)
    pos = norm > 0
    out[pos] = bump(r[pos] * 2.0 ** (-j)) / norm[pos]
    return out


@dataclass(frozen=True, eq=False)
class DyadicFamily:
    """Block symbols of the decomposition on one grid.

    ``blocks[j]`` holds the homogeneous symbol for ``j_min <= j <= j_max``;
    ``low`` is the inhomogeneous ``Psi`` block, used as index -1.
    """

    grid: sp.SpectralGrid
    j_min: int
    j_max: int
    blocks: dict = field(repr=False)
    low: np.ndarray = field(repr=False)
    bump_support: tuple = (0.5, 2.0)

    def indices(self, homogeneous=False):
        lo = self.j_min if homogeneous else -1
        return range(lo, self.j_max + 1)

    def symbol(self, j, homogeneous=False):
        if j not in self.indices(homogeneous):
            kind = "homogeneous" if homogeneous else "inhomogeneous"
            raise ConfigurationError(
                f"block j={j} outside the {kind} range "
                f"[{self.indices(homogeneous)[0]}, {self.j_max}]")
        if j == -1 and not homogeneous:
            return self.low
        return self.blocks[j]

    def partition_residual(self, homogeneous=False):
        """Max over the lattice of ``|sum_j symbol_j - 1|`` (origin excluded if homogeneous)."""
        total = sum(self.symbol(j, homogeneous) for j in self.indices(homogeneous))
        resid = np.abs(total - 1.0)
        if homogeneous:
            resid = resid.copy()
            resid[0, 0] = 0.0
        return float(resid.max())


def nyquist_wavenumber(grid):
    return grid.n // 2 * grid.scale


def max_j(grid):
    """Largest ``j`` with ``2^j`` strictly below the Nyquist wavenumber."""
    return math.ceil(math.log2(nyquist_wavenumber(grid))) - 1


@lru_cache(maxsize=32)
def build_family(grid, j_min=None, j_max=None):
    """Construct the dyadic family on ``grid``.

    ``j_max`` defaults to the largest admissible value; ``j_min`` defaults to
    the lowest block needed to cover the smallest nonzero wavenumber (and at
    most -1).
    """
    r = grid.k_magnitude
    limit = max_j(grid)
    if j_max is None:
        j_max = limit
    if j_max > limit:
        raise ConfigurationError(
            f"j_max={j_max} too large: 2^j_max must stay below the Nyquist "
            f"wavenumber {nyquist_wavenumber(grid):g} (largest admissible j_max={limit})")
    cover = math.floor(math.log2(grid.scale))
    if j_min is None:
        j_min = min(-1, cover)
    if j_min > cover:
        raise ConfigurationError(
            f"j_min={j_min} leaves the smallest wavenumber {grid.scale:g} uncovered")
    if j_max < 1 or j_min > j_max:
        raise ConfigurationError(f"empty or degenerate block range [{j_min}, {j_max}]")

    blocks = {}
    for j in range(j_min, j_max):
        blocks[j] = phi(j, r)
    top = phi(j_max, r)
    top[r >= 2.0**j_max] = 1.0
    blocks[j_max] = top
    low = np.where(r < 1.0, 1.0 - phi(0, r), 0.0)
    for a in list(blocks.values()) + [low]:
        a.flags.writeable = False
    return DyadicFamily(grid, j_min, j_max, blocks, low)


def dyadic_block(f, j, family=None, homogeneous=False):
    """Frequency projection ``Delta_j f``."""
    family = family or build_family(f.grid)
    return SpectralField(f.grid, coeffs=f.coeffs * family.symbol(j, homogeneous))


def partial_sum(f, j, family=None):
    """``S_j f = sum_{k=-1}^{j-1} Delta_k f``; ``j > j_max`` gives ``f``."""
    family = family or build_family(f.grid)
    if j < 0:
        raise ConfigurationError(f"partial sum index must be >= 0, got {j}")
    top = min(j - 1, family.j_max)
    symbol = sum(family.symbol(k) for k in range(-1, top + 1))
    return SpectralField(f.grid, coeffs=f.coeffs * symbol)


# --------------------------------------------------------------------------
# Besov norms


@dataclass(frozen=True)
class BesovNormSpec:
    s: float
    p: float = 2.0
    q: float = 2.0
    homogeneous: bool = False
    method: str = "fourier"

    def __post_init__(self):
        if not (self.p >= 1 and self.q >= 1):
            raise DomainError(f"Besov indices need p, q >= 1 (got p={self.p}, q={self.q})")
        if self.method not in ("fourier", "difference"):
            raise ConfigurationError(f"unknown Besov method {self.method!r}")
        if self.method == "difference" and not 0 < self.s < 1:
            raise DomainError(
                f"difference-quotient Besov norm needs s in (0, 1), got {self.s}")


def _lq(values, q):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    if math.isinf(q):
        return float(values.max())
    return float(np.sum(values**q) ** (1.0 / q))


def block_norms(f, p, family=None, homogeneous=False, oversample=1):
    """``{j: ||Delta_j f||_{L^p}}`` over the family range."""
    family = family or build_family(f.grid)
    return {j: sp.lebesgue_norm(dyadic_block(f, j, family, homogeneous), p, oversample)
            for j in family.indices(homogeneous)}


def besov_norm(f, spec, family=None, oversample=1):
    """``|| 2^{js} ||Delta_j f||_{L^p} ||_{l^q}`` (or the difference form)."""
    if spec.method == "difference":
        return besov_norm_difference(f, spec.s, spec.p, spec.q, homogeneous=spec.homogeneous)
    norms = block_norms(f, spec.p, family, spec.homogeneous, oversample)
    return _lq([2.0 ** (j * spec.s) * v for j, v in norms.items()], spec.q)


def _shift_lattice(n):
    half = n // 2
    a = np.arange(-half, half)
    A, B = np.meshgrid(a, a, indexing="ij")
    keep = (A != 0) | (B != 0)
    return A[keep], B[keep]


def besov_norm_difference(f, s, p=2.0, q=2.0, homogeneous=False, max_per_shell=64):
    """Translation-difference Besov norm over grid-multiple shifts.

    Integrates ``||f(.+t) - f||_p^q / |t|^(2+sq)`` over the fundamental cell of
    shifts.  For ``p = 2`` every lattice shift is used (the differences come
    from the autocorrelation); otherwise shifts are grouped in dyadic shells
    ``2^m <= |t|/dx < 2^(m+1)`` and each shell is estimated from at most
    ``max_per_shell`` evenly spaced members, weighted by the shell's size.
    Returns the seminorm, plus ``||f||_p`` unless ``homogeneous``.
    """
    if not 0 < s < 1:
        raise DomainError(f"difference-quotient Besov norm needs s in (0, 1), got {s}")
    if not (p >= 1 and q >= 1):
        raise DomainError("p, q must be >= 1")
    grid = f.grid
    n, dx = grid.n, grid.dx
    A, B = _shift_lattice(n)
    radius = np.hypot(A, B)
    if p == 2:
        c = f.coeffs
        auto = sp.inverse(c.real**2 + c.imag**2, n) * grid.cell_area
        diff = np.sqrt(np.maximum(2 * auto[0, 0] - 2 * auto[A % n, B % n], 0.0))
        weight = np.ones_like(radius)
    else:
        shell = np.floor(np.log2(radius)).astype(int)
        chosen, weights = [], []
        for m in np.unique(shell):
            members = np.nonzero(shell == m)[0]
            members = members[np.argsort(np.arctan2(B[members], A[members]), kind="stable")]
            pick = members if members.size <= max_per_shell else members[
                np.linspace(0, members.size - 1, max_per_shell).round().astype(int)]
            chosen.append(pick)
            weights.append(np.full(pick.size, members.size / pick.size))
        idx = np.concatenate(chosen)
        A, B, radius = A[idx], B[idx], radius[idx]
        weight = np.concatenate(weights)
        v = f.values
        diff = np.array([
            sp.lebesgue_norm(SpectralField(grid, values=np.roll(v, (-a, -b), axis=(0, 1)) - v), p)
            for a, b in zip(A, B)])
    t = radius * dx
    if math.isinf(q):
        semi = float(np.max(diff / t**s))
    else:
        integrand = diff**q / t ** (2 + s * q)
        semi = float(np.sum(weight * integrand) * grid.cell_area) ** (1.0 / q)
    if homogeneous:
        return semi
    return sp.lebesgue_norm(f, p) + semi


# --------------------------------------------------------------------------
# Bernstein and Kato-Ponce measurements


@dataclass(frozen=True)
class BernsteinReport:
    j: int
    alpha: float
    lower_ratio: float
    upper_ratio: float
    bracket: tuple
    within: bool


def annulus_projection(f, j):
    r = f.grid.k_magnitude
    mask = (r >= 2.0 ** (j - 1)) & (r < 2.0 ** (j + 1))
    return SpectralField(f.grid, coeffs=f.coeffs * mask)


def bernstein_check(f, j, alpha, p=2.0, q=2.0, bracket=None):
    """Bernstein ratios for ``f`` projected onto the annulus ``A_j``.

    lower = ||Lambda^a f||_q / (2^{aj} ||f||_q)
    upper = ||Lambda^a f||_q / (2^{aj + 2j(1/p - 1/q)} ||f||_p)

    ``within`` reports whether the lower ratio lies in ``bracket``, by default
    ``[2^-a, 2^a]``: the range of ``(|k| / 2^j)^a`` over the annulus.
    """
    g = annulus_projection(f, j)
    # coefficients at roundoff level relative to f count as empty
    if not np.abs(g.coeffs).max() > 1e-12 * np.abs(f.coeffs).max():
        raise ConfigurationError(f"field has empty spectral support in annulus j={j}")
    if bracket is None:
        bracket = (2.0 ** (-alpha), 2.0**alpha)
    lam = sp.fractional_laplacian(g, alpha)
    top = sp.lebesgue_norm(lam, q)
    lower = top / (2.0 ** (alpha * j) * sp.lebesgue_norm(g, q))
    inv = (1.0 / p) - (0.0 if math.isinf(q) else 1.0 / q)
    upper = top / (2.0 ** (alpha * j + 2 * j * inv) * sp.lebesgue_norm(g, p))
    within = bracket[0] * (1 - 1e-12) <= lower <= bracket[1] * (1 + 1e-12)
    return BernsteinReport(j, alpha, lower, upper, tuple(bracket), bool(within))


def kato_ponce_ratio(f, g, s, p, q1, r1, q2, r2):
    """``||Lambda^s(fg)||_p / (||Lambda^s f||_q1 ||g||_r1 + ||Lambda^s g||_q2 ||f||_r2)``.

    Products are formed after dealiasing both factors, so ``fg`` is exact.
    """
    for a, b in ((q1, r1), (q2, r2)):
        rb = 0.0 if math.isinf(b) else 1.0 / b
        if abs(1.0 / a + rb - 1.0 / p) > 1e-12:
            raise DomainError("Hoelder exponents must satisfy 1/p = 1/q + 1/r")
    f, g = sp.dealias(f), sp.dealias(g)
    fg = SpectralField(f.grid, values=f.values * g.values)
    num = sp.lebesgue_norm(sp.fractional_laplacian(fg, s), p)
    den = (sp.lebesgue_norm(sp.fractional_laplacian(f, s), q1) * sp.lebesgue_norm(g, r1)
           + sp.lebesgue_norm(sp.fractional_laplacian(g, s), q2) * sp.lebesgue_norm(f, r2))
    return num / den


# --------------------------------------------------------------------------
# Commutators


def advect(u, f):
    """Dealiased ``P(u . grad f)`` for band-limited inputs."""
    u1, u2 = u
    d1, d2 = sp.gradient(f)
    prod = u1.values * d1.values + u2.values * d2.values
    return sp.dealias(SpectralField(f.grid, values=prod))


def check_divergence_free(u, tol=1e-10):
    u1, u2 = u
    div = sp.spectral_max_norm(sp.divergence(u1, u2))
    scale = max(sp.spectral_max_norm(u1), sp.spectral_max_norm(u2), 1e-300)
    if div > tol * scale * max(1.0, u1.grid.n * u1.grid.scale):
        raise ConfigurationError(f"velocity is not divergence-free (max |div u| = {div:.3e})")


def commutator(u, f, alpha):
    """``[R_alpha, u.grad] f = R_alpha P(u.grad f) - P(u.grad R_alpha f)``.

    Inputs are dealiased first so both products are exact on the kept band.
    """
    u = (sp.dealias(u[0]), sp.dealias(u[1]))
    f = sp.dealias(f)
    rf = sp.riesz_alpha(f, alpha)
    return sp.riesz_alpha(advect(u, f), alpha) - advect(u, rf)


def commutator_block_norm(k, u, theta, alpha, p=2.0, family=None):
    """``||Delta_k [R_alpha, u.grad] theta||_{L^p}``."""
    if not 0.5 < alpha < 1:
        raise DomainError(f"commutator estimates need alpha in (1/2, 1), got {alpha}")
    check_divergence_free(u)
    family = family or build_family(theta.grid)
    return sp.lebesgue_norm(dyadic_block(commutator(u, theta, alpha), k, family), p)


def paraproduct_split(f, g, k, family=None, offset=2):
    """Split ``Delta_k(fg)`` by the frequency of ``f`` relative to ``2^k``.

    Returns ``(low_high, high_low, high_high)`` with ``f`` restricted to
    ``j < k - offset``, ``k - offset <= j < k + offset`` and
    ``j >= k + offset``; the three pieces sum to ``Delta_k(fg)`` exactly.
    Diagnostic only: commutators themselves are computed by subtraction.
    """
    family = family or build_family(f.grid)
    f, g = sp.dealias(f), sp.dealias(g)

    def band(lo, hi):
        js = [j for j in family.indices() if lo <= j < hi]
        sym = sum((family.symbol(j) for j in js), np.zeros(f.grid.spectral_shape))
        return SpectralField(f.grid, coeffs=f.coeffs * sym)

    pieces = []
    for lo, hi in ((-1, k - offset), (k - offset, k + offset), (k + offset, family.j_max + 1)):
        fb = band(lo, hi)
        prod = SpectralField(f.grid, values=fb.values * g.values)
        pieces.append(dyadic_block(prod, k, family))
    return tuple(pieces)


@dataclass
class CommutatorScan:
    alpha: float
    p: float
    tol: float
    ks: list
    slope_G: float
    slope_theta: float
    rows: list

    @property
    def theory_G(self):
        return 1.0 - self.alpha

    @property
    def theory_theta(self):
        return 2.0 - 2.0 * self.alpha

    @property
    def passed_G(self):
        return self.slope_G <= self.theory_G + self.tol

    @property
    def passed_theta(self):
        return self.slope_theta <= self.theory_theta + self.tol

    @property
    def passed(self):
        return self.passed_G and self.passed_theta

    def summary(self):
        return {
            "alpha": self.alpha,
            "p": self.p,
            "k": list(self.ks),
            "slope_G": self.slope_G,
            "slope_theta": self.slope_theta,
            "theory_G": self.theory_G,
            "theory_theta": self.theory_theta,
            "tol": self.tol,
            "passed_G": self.passed_G,
            "passed_theta": self.passed_theta,
        }

    def write_csv(self, path, kind):
        """One row per ``k``: columns k, block_norm, theory_bound, ratio."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "block_norm", "theory_bound", "ratio"])
            for row in self.rows:
                if row["kind"] == kind:
                    w.writerow([row["k"], f"{row['block_norm']:.17g}",
                                f"{row['theory_bound']:.17g}", f"{row['ratio']:.17g}"])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def usable_scales(grid, family=None):
    """Block indices whose full annulus is an exact bump inside the dealiased band."""
    family = family or build_family(grid)
    cutoff = grid.n // 3 * grid.scale
    return [k for k in range(2, family.j_max) if 2.0 ** (k + 1) <= cutoff]


def commutator_rate_scan(u_G, u_theta, theta, psi, alpha, k_range=None, p=2.0, tol=0.15):
    """Fit the growth rate in ``k`` of both commutator block norms.

    The theoretical bounds grow like ``2^{(1-alpha)k}`` for
    ``[R_alpha, u_G.grad] theta`` and ``2^{(2-2alpha)k}`` for
    ``[R_alpha, u_theta.grad] psi``; slopes are least-squares fits of
    ``log2`` block norms over the usable ``k`` in ``k_range``.
    """
    if not 0.5 < alpha < 1:
        raise DomainError(f"commutator estimates need alpha in (1/2, 1), got {alpha}")
    grid = theta.grid
    family = build_family(grid)
    check_divergence_free(u_G)
    check_divergence_free(u_theta)
    usable = usable_scales(grid, family)
    ks = [k for k in (usable if k_range is None else k_range) if k in usable]
    if len(ks) < 3:
        raise ConfigurationError(
            f"need at least 3 resolved scales for a slope fit, got {ks} "
            f"(resolved range {usable})")
    comm_G = commutator(u_G, theta, alpha)
    comm_T = commutator(u_theta, psi, alpha)
    G = sp.curl(*u_G)
    p12 = 2 * p
    amp_G = sp.lebesgue_norm(G, p12) * sp.lebesgue_norm(theta, p12)
    amp_T = sp.lebesgue_norm(theta, p12) * sp.lebesgue_norm(psi, p12)
    rows, logs_G, logs_T = [], [], []
    for k in ks:
        for kind, comm, rate, amp, logs in (("G", comm_G, 1 - alpha, amp_G, logs_G),
                                            ("theta", comm_T, 2 - 2 * alpha, amp_T, logs_T)):
            norm = sp.lebesgue_norm(dyadic_block(comm, k, family), p)
            bound = 2.0 ** (rate * k) * amp
            rows.append({"kind": kind, "k": k, "block_norm": norm, "theory_bound": bound,
                         "ratio": norm / bound if bound > 0 else float("nan")})
            logs.append(math.log2(max(norm, 1e-300)))
    slope_G = float(np.polyfit(ks, logs_G, 1)[0])
    slope_T = float(np.polyfit(ks, logs_T, 1)[0])
    return CommutatorScan(alpha, p, tol, ks, slope_G, slope_T, rows)


def random_field(grid, seed, k_lo=1.0, k_hi=None, slope=0.0, rng=None):
    """Random real field with ``|c_k| ~ |k|^slope`` on ``k_lo <= |k| <= k_hi``.

    ``slope = -1`` gives statistically equal ``L^2`` mass per dyadic block.
    Normalised to unit ``L^2`` norm; mean zero whenever ``k_lo > 0``.
    """
    rng = rng or np.random.default_rng(seed)
    if k_hi is None:
        k_hi = grid.n // 3 * grid.scale
    r = grid.k_magnitude
    mask = (r >= k_lo) & (r <= k_hi) & grid.dealias_mask
    with np.errstate(divide="ignore"):
        env = np.where(mask, np.where(r > 0, r, 1.0) ** slope, 0.0)
    noise = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
    f = SpectralField(grid, coeffs=noise * env)
    # round trip enforces Hermitian symmetry of the stored half spectrum
    f = SpectralField(grid, values=f.values)
    norm = sp.l2_norm_spectral(f)
    if norm == 0:
        return f
    return f * (1.0 / norm)


def synthetic_commutator_fields(grid, alpha, seed, source_band=4.0, rough_source=False):
    """Inputs for a rate scan: ``(u_G, u_theta, theta, psi)``.

    The velocities come from band-limited sources (``|k| <= source_band``):
    ``u_G`` is the Biot-Savart velocity of a random ``G`` and ``u_theta`` that
    of ``R_alpha`` applied to a random source.  The transported fields
    ``theta`` and ``psi`` carry equal ``L^2`` mass in every dyadic block up
    to the dealiasing cutoff.  With ``rough_source=True`` the ``u_theta``
    source is ``theta`` itself.
    """
    rng = np.random.default_rng(seed)
    G = random_field(grid, seed, 1.0, source_band, rng=rng)
    source = random_field(grid, seed, 1.0, source_band, rng=rng)
    theta = random_field(grid, seed, 1.0, None, slope=-1.0, rng=rng)
    psi = random_field(grid, seed, 1.0, None, slope=-1.0, rng=rng)
    if rough_source:
        source = theta
    u_G = sp.biot_savart(G)
    u_theta = sp.biot_savart(sp.riesz_alpha(source, alpha))
    return u_G, u_theta, theta, psi
