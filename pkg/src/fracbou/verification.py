"""Desk-scale property suites behind ``fracbou verify``.

Each suite returns a :class:`SuiteReport` of named checks with the measured
value and the tolerance it was held to.  ``fault="broken-multiplier"``
perturbs one symbol in the operator suite (negative control); the other
suites accept the argument and ignore it.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import exponents as ex
from . import littlewood_paley as lp
from . import spectral as sp

SUITES = ("operators", "lp", "commutators", "exponents")
FAULTS = ("broken-multiplier",)


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float

    def to_dict(self):
        return {"name": self.name, "pass": bool(self.passed), "value": _num(self.value),
                "tolerance": _num(self.tolerance)}


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


@dataclass
class SuiteReport:
    name: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, value, tolerance, passed=None):
        if passed is None:
            passed = value < tolerance
        self.checks.append(Check(name, bool(passed), float(value), float(tolerance)))

    def to_dict(self):
        return {"suite": self.name, "pass": self.passed, "seconds": round(self.seconds, 3),
                "checks": [c.to_dict() for c in self.checks]}


# --------------------------------------------------------------------------
# Spectral operators


def _plane_wave_cases(n):
    third = n // 3
    return [(1, 0), (0, 1), (3, -2), (-5, 7), (third, 1), (2, third), (-third, -third)]


def _operator_table(alpha=0.7):
    return [
        ("Lambda^-1.5", sp.fractional_laplacian_multiplier(-1.5), lambda k: np.hypot(*k) ** -1.5),
        ("Lambda^-0.5", sp.fractional_laplacian_multiplier(-0.5), lambda k: np.hypot(*k) ** -0.5),
        ("Lambda^0.3", sp.fractional_laplacian_multiplier(0.3), lambda k: np.hypot(*k) ** 0.3),
        ("Lambda^1", sp.fractional_laplacian_multiplier(1.0), lambda k: np.hypot(*k)),
        ("Lambda^2", sp.fractional_laplacian_multiplier(2.0), lambda k: k[0] ** 2 + k[1] ** 2),
        ("d1", sp.derivative_multiplier(0), lambda k: 1j * k[0]),
        ("d2", sp.derivative_multiplier(1), lambda k: 1j * k[1]),
        (f"R_{alpha}", sp.riesz_alpha_multiplier(alpha),
         lambda k: 1j * k[0] * np.hypot(*k) ** -alpha),
        ("Riesz1", sp.riesz_transform_multiplier(0), lambda k: 1j * k[0] / np.hypot(*k)),
        ("Riesz2", sp.riesz_transform_multiplier(1), lambda k: 1j * k[1] / np.hypot(*k)),
        ("inv_laplacian", sp.inverse_laplacian_multiplier(),
         lambda k: -1.0 / (k[0] ** 2 + k[1] ** 2)),
    ]


def _broken(spec):
    return sp.MultiplierSpec(spec.name + "(broken)",
                             lambda k1, k2: spec.symbol(k1, k2) * (1 + 1e-6 * np.cos(k1)),
                             spec.zero_mode)


def plane_wave_error(grid, spec, exact, k, phase=0.3):
    """Relative sup error of ``spec`` applied to ``cos(k.x + phase)``.

    The phase is reduced modulo the period in integer arithmetic, so the
    input carries no argument-reduction error.  When the exact output
    vanishes identically the absolute error is returned.
    """
    n = grid.n
    i = np.arange(n)
    turns = (k[0] * i[:, None] + k[1] * i[None, :]) % n
    arg = 2 * np.pi * turns / n + phase
    f = sp.SpectralField(grid, values=np.cos(arg))
    symbol = exact((k[0] * grid.scale, k[1] * grid.scale))
    expected = (symbol * np.exp(1j * arg)).real
    out = sp.apply_multiplier(f, spec).values
    err = float(np.abs(out - expected).max())
    return err if symbol == 0 else err / float(np.abs(symbol))


def band_limited_field(grid, seed, k_hi=None):
    """Random mean-zero field strictly inside the dealiased band."""
    k_hi = grid.n // 3 if k_hi is None else k_hi
    return lp.random_field(grid, seed, 1.0, k_hi)


def suite_operators(sizes=(32, 128), fault=None):
    rep = SuiteReport("operators")
    t0 = time.perf_counter()
    for n in sizes:
        grid = sp.make_grid(n)
        worst = 0.0
        for name, spec, exact in _operator_table():
            if fault == "broken-multiplier" and name == "Lambda^0.3":
                spec = _broken(spec)
            for k in _plane_wave_cases(n):
                worst = max(worst, plane_wave_error(grid, spec, exact, k))
        rep.add(f"plane_waves_n{n}", worst, 1e-12)

        div_err = curl_err = comp_err = 0.0
        for seed in range(5):
            w = band_limited_field(grid, seed)
            u1, u2 = sp.biot_savart(w)
            scale = sp.l2_norm_spectral(w)
            div_err = max(div_err, sp.l2_norm_spectral(sp.divergence(u1, u2)) / scale)
            curl_err = max(curl_err, sp.l2_norm_spectral(sp.curl(u1, u2) - w) / scale)
            for a, b in ((0.3, 0.5), (-0.7, 1.2), (1.5, -1.5), (-1.0, -0.5)):
                lhs = sp.fractional_laplacian(sp.fractional_laplacian(w, b), a)
                if a + b == 0:
                    rhs = w
                else:
                    rhs = sp.fractional_laplacian(w, a + b)
                comp_err = max(comp_err, sp.l2_norm_spectral(lhs - rhs)
                               / max(sp.l2_norm_spectral(rhs), 1e-300))
        rep.add(f"biot_savart_divergence_n{n}", div_err, 1e-12)
        rep.add(f"biot_savart_curl_n{n}", curl_err, 1e-12)
        rep.add(f"lambda_composition_n{n}", comp_err, 1e-12)
    rep.seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# Littlewood-Paley


def annulus_field(grid, j, rng):
    """Random real field supported in ``2^{j-1} <= |k| < 2^{j+1}``."""
    r = grid.k_magnitude
    mask = (r >= 2.0 ** (j - 1)) & (r < 2.0 ** (j + 1))
    c = (rng.standard_normal(grid.spectral_shape)
         + 1j * rng.standard_normal(grid.spectral_shape)) * mask
    f = sp.SpectralField(grid, coeffs=c)
    return sp.SpectralField(grid, values=f.values)


def suite_lp(n=256, samples=100, seed=0, fault=None):
    rep = SuiteReport("lp")
    t0 = time.perf_counter()
    grid = sp.make_grid(n)
    family = lp.build_family(grid)
    rep.add("partition_residual_inhomogeneous", family.partition_residual(False), 1e-12)
    rep.add("partition_residual_homogeneous", family.partition_residual(True), 1e-12)

    recon = 0.0
    for s in range(3):
        f = lp.random_field(grid, s, 0.0, None)
        total = sum((lp.dyadic_block(f, j, family) for j in family.indices()),
                    sp.SpectralField.zeros(grid))
        recon = max(recon, sp.l2_norm_spectral(total - f) / sp.l2_norm_spectral(f))
    rep.add("reconstruction_residual", recon, 1e-10)

    overlap = 0.0
    idx = family.indices(True)
    for j in idx:
        for k in idx:
            if abs(j - k) >= 2:
                prod = family.symbol(j, True) * family.symbol(k, True)
                overlap = max(overlap, float(np.abs(prod).max()))
    rep.add("almost_orthogonality", overlap, 0.0, passed=overlap == 0.0)

    rng = np.random.default_rng(seed)
    worst_lo, worst_hi, inside = math.inf, 0.0, 0
    js = [j for j in range(1, family.j_max)]
    for i in range(samples):
        j = js[i % len(js)]
        alpha = float(rng.uniform(0.1, 2.0))
        f = annulus_field(grid, j, rng)
        b = lp.bernstein_check(f, j, alpha, p=2.0, q=2.0)
        lower = b.lower_ratio
        inside += b.within
        worst_lo = min(worst_lo, lower / b.bracket[0])
        worst_hi = max(worst_hi, lower / b.bracket[1])
    rep.add("bernstein_samples_within_bracket", inside, samples, passed=inside == samples)
    rep.add("bernstein_min_lower_over_bracket_lo", worst_lo, 1.0, passed=worst_lo >= 1 - 1e-12)
    rep.add("bernstein_max_lower_over_bracket_hi", worst_hi, 1.0, passed=worst_hi <= 1 + 1e-12)
    rep.seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# Commutators


def commutator_scans(n=256, alphas=(0.6, 0.8), seeds=range(10), rough_source=False):
    grid = sp.make_grid(n)
    out = {}
    for alpha in alphas:
        out[alpha] = [lp.commutator_rate_scan(
            *lp.synthetic_commutator_fields(grid, alpha, s, rough_source=rough_source), alpha)
            for s in seeds]
    return out


def suite_commutators(n=256, alphas=(0.6, 0.8), seeds=range(10), fault=None):
    rep = SuiteReport("commutators")
    t0 = time.perf_counter()
    scans = commutator_scans(n, alphas, seeds)
    for alpha, runs in scans.items():
        sG = max(r.slope_G for r in runs)
        sT = max(r.slope_theta for r in runs)
        rep.add(f"slope_G_alpha{alpha}", sG, (1 - alpha) + 0.15,
                passed=sG <= (1 - alpha) + 0.15)
        rep.add(f"slope_theta_alpha{alpha}", sT, (2 - 2 * alpha) + 0.15,
                passed=sT <= (2 - 2 * alpha) + 0.15)
    rep.seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# Exponents


def suite_exponents(fault=None):
    rep = SuiteReport("exponents")
    t0 = time.perf_counter()
    opt = ex.optimize_gamma()
    gap_g, gap_a = opt.gamma_gap, opt.alpha_gap
    rep.add("gamma0_closed_form", gap_g, 1e-10)
    rep.add("alpha_cr_closed_form", gap_a, 1e-10)
    rep.add("binding_curves_equal", abs(ex.alpha_cr_of_gamma(ex.GAMMA0)
                                        - ex.alpha_beta1_bound(ex.GAMMA0)), 1e-10)
    rep.add("oracle_agreement", opt.oracle_gap, 1e-8)
    rep.add("alpha_cr_printed", 0.0, 1.0, passed=f"{opt.alpha_cr:.6f}" == "0.798103")

    table = ex.feasibility_table(ex.GAMMA0, rho=1e-6, points=200)
    bad = sum(not r["all"] for r in table.rows)
    rep.add("feasibility_table_all_feasible", bad, 1, passed=bad == 0)

    alphas = np.linspace(0.8, 1.0, 102)[1:-1]
    q = np.array([ex.q0_prior(a) for a in alphas])
    rep.add("q0_in_(2,4)", float(np.sum((q <= 2) | (q >= 4))), 1,
            passed=bool(np.all((q > 2) & (q < 4))))
    rep.add("q0_below_6", float(q.max()), 6.0)

    disagree = 0
    identity = 0.0
    for g in np.linspace(0.01, 0.45, 23):
        for a in np.linspace(0.5, 0.99, 23):
            asg = ex.make_assignment(float(a), float(g))
            if not ex.check_closure(asg).routes_agree:
                disagree += 1
            if -0.5 < asg.b < 1.0:
                # expanded form = direct form multiplied through by (1 + 2b)/3
                direct = (asg.a + 2 * g) * ex.conjugate(3.0 / (2.0 * (1.0 - asg.b)))
                expanded = ex.closure_2a_expanded(float(a), float(g), asg.rho)
                gap = abs((expanded - 2) - (1 + 2 * asg.b) / 3 * (direct - 2))
                identity = max(identity, gap / max(1.0, abs(direct)))
    rep.add("closure_routes_agree", disagree, 1, passed=disagree == 0)
    rep.add("closure_2a_identity", identity, 1e-12)
    rep.seconds = time.perf_counter() - t0
    return rep


def run_suite(name, fault=None):
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    table = {"operators": suite_operators, "lp": suite_lp,
             "commutators": suite_commutators, "exponents": suite_exponents}
    if name == "all":
        return [table[s](fault=fault) for s in SUITES]
    if name not in table:
        raise ValueError(f"unknown suite {name!r}")
    return [table[name](fault=fault)]
