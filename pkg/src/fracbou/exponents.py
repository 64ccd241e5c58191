"""Exponent bookkeeping behind the L^6 bound for G.

Everything here is a closed-form evaluation in the parameters ``alpha``
(dissipation power on the vorticity), ``gamma`` in (0, 1/2) (the Lebesgue
index ``1/gamma`` used for ``Lambda^{gamma(1-alpha)} theta``) and a small
``rho > 0``.  The admissible range of ``alpha`` is

    alpha > max(alpha_1(gamma), (12 gamma + 2)/(3 - 6 gamma), (4 - 2 gamma)/(5 - 2 gamma))

and minimising the envelope over ``gamma`` gives the threshold ``alpha_cr``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, OptimizationError

SQRT1777 = math.sqrt(1777.0)
GAMMA0 = (43.0 - SQRT1777) / 36.0
ALPHA_CR = (SQRT1777 - 23.0) / 24.0
DEFAULT_RHO = 1e-6
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
# slack for floating comparisons of algebraically equal quantities
CMP_EPS = 1e-12


def _check_gamma(gamma):
    if not 0.0 < gamma < 0.5:
        raise DomainError(f"gamma must lie in (0, 1/2), got {gamma}")


def alpha_cr_of_gamma(gamma):
    """Root of ``(2 - gamma)(1 - alpha) = alpha / 2``."""
    _check_gamma(gamma)
    return (4.0 - 2.0 * gamma) / (5.0 - 2.0 * gamma)


def alpha_one_residual(gamma, alpha):
    """``6(1-gamma) alpha^2 + (1-7gamma) alpha - 4(1-gamma)``."""
    return 6.0 * (1.0 - gamma) * alpha**2 + (1.0 - 7.0 * gamma) * alpha - 4.0 * (1.0 - gamma)


def alpha_one(gamma):
    """Positive root of :func:`alpha_one_residual` in ``alpha``."""
    _check_gamma(gamma)
    c = 1.0 - 7.0 * gamma
    g = 1.0 - gamma
    return (-c + math.sqrt(c * c + 96.0 * g * g)) / (12.0 * g)


def alpha_beta1_bound(gamma):
    """``(12 gamma + 2)/(3 - 6 gamma)``, the constraint from ``beta_1 >= (1 + 6 gamma)/4``."""
    _check_gamma(gamma)
    return (12.0 * gamma + 2.0) / (3.0 - 6.0 * gamma)


def envelope(gamma):
    """Largest of the three lower bounds on ``alpha`` at this ``gamma``."""
    return max(alpha_one(gamma), alpha_beta1_bound(gamma), alpha_cr_of_gamma(gamma))


def q0_prior(alpha):
    """Lebesgue index ``(8 - 4 alpha)/(8 - 7 alpha)`` of the earlier G bound."""
    if not 0.8 < alpha < 1.0:
        raise DomainError(f"q0 is defined for alpha in (4/5, 1), got {alpha}")
    return (8.0 - 4.0 * alpha) / (8.0 - 7.0 * alpha)


def conjugate(x):
    """Hoelder conjugate ``x / (x - 1)``; requires ``x > 1``."""
    if not x > 1.0:
        raise DomainError(f"conjugate exponent needs x > 1, got {x}")
    return x / (x - 1.0) if math.isfinite(x) else 1.0


# --------------------------------------------------------------------------
# Assignments


@dataclass(frozen=True)
class Window:
    """Open interval ``(lo, hi)``; ``hi`` may be infinite."""

    lo: float
    hi: float

    @property
    def nonempty(self):
        return self.lo < self.hi

    def contains(self, x):
        return self.lo < x < self.hi

    @property
    def midpoint(self):
        if not self.nonempty:
            return math.nan
        if math.isinf(self.hi):
            return self.lo + 1.0
        return 0.5 * (self.lo + self.hi)


def l2_bound_windows(alpha):
    """Smoothness choices for the ``L^2`` bound on G: ``(s1, s2 window)``."""
    return (1.0 - alpha) / 2.0, Window(1.5 * (1.0 - alpha), alpha / 2.0)


@dataclass(frozen=True)
class ExponentAssignment:
    alpha: float
    gamma: float
    rho: float
    beta: float
    a: float
    b: float
    beta1: float
    inv_p1: float
    inv_p2: float
    inv_p3: float
    s_window: Window
    s1: float
    s2: float
    s2_window: Window
    a_in_01: bool
    b_in_01: bool
    beta1_in_01: bool

    @property
    def p1(self):
        return _inverse(self.inv_p1)

    @property
    def p2(self):
        return _inverse(self.inv_p2)

    @property
    def p3(self):
        return _inverse(self.inv_p3)

    @property
    def in_range(self):
        return self.a_in_01 and self.b_in_01 and self.beta1_in_01

    @property
    def inv_p2_long(self):
        """``1/p2`` summed term by term from the interpolation weights."""
        top = (1.0 - self.gamma) * (1.0 - self.alpha) + self.rho
        return top / 2.0 + self.a * (0.5 - self.alpha / 4.0) + (1.0 - self.a) / 6.0

    @property
    def b_from_p3(self):
        """``b`` solved from ``1/(4 p3) = b/6 + (1 - b)(2 - alpha)/12``."""
        lo = (2.0 - self.alpha) / 12.0
        return (self.inv_p3 / 4.0 - lo) / (1.0 / 6.0 - lo)

    @property
    def beta1_from_interp(self):
        """``beta_1`` solved from ``(1-2gamma)/8 = beta_1/6 + (1-beta_1)(2-alpha)/12``."""
        lo = (2.0 - self.alpha) / 12.0
        return ((1.0 - 2.0 * self.gamma) / 8.0 - lo) / (1.0 / 6.0 - lo)


def _inverse(x):
    return math.inf if x == 0 else 1.0 / x


def _in01(x):
    return 0.0 < x < 1.0


def make_assignment(alpha, gamma, rho=DEFAULT_RHO):
    """All derived indices for ``(alpha, gamma, rho)``; infeasibility shows in the flags."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    _check_gamma(gamma)
    if rho < 0:
        raise DomainError(f"rho must be nonnegative, got {rho}")
    top = (1.0 - gamma) * (1.0 - alpha) + rho
    a = 2.0 * top / alpha
    b = 1.0 - (a + 3.0 * gamma) / alpha
    beta1 = 12.0 / alpha * ((1.0 - 2.0 * gamma) / 8.0 + (alpha - 2.0) / 12.0)
    inv_p1 = 5.0 / 6.0 - gamma
    inv_p2 = (1.0 + 2.0 * a) / 6.0
    inv_p3 = (2.0 - a) / 3.0 - gamma
    return ExponentAssignment(
        alpha=alpha, gamma=gamma, rho=rho, beta=1.0 - alpha,
        a=a, b=b, beta1=beta1, inv_p1=inv_p1, inv_p2=inv_p2, inv_p3=inv_p3,
        s_window=Window((2.0 - gamma) * (1.0 - alpha), alpha / 2.0),
        s1=gamma * (1.0 - alpha), s2=top,
        s2_window=Window((1.0 - gamma) * (1.0 - alpha), math.inf),
        a_in_01=_in01(a), b_in_01=_in01(b), beta1_in_01=_in01(beta1),
    )


# --------------------------------------------------------------------------
# Closure


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    algebraic: bool
    statement: str

    @property
    def routes_agree(self):
        return self.satisfied == self.algebraic


@dataclass(frozen=True)
class ClosureReport:
    assignment: ExponentAssignment
    conditions: tuple
    conjugate_defined: bool
    s_window_nonempty: bool

    def __getitem__(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def closes(self):
        return all(c.satisfied for c in self.conditions)

    @property
    def routes_agree(self):
        return all(c.routes_agree for c in self.conditions)

    @property
    def feasible(self):
        return self.closes and self.assignment.in_range and self.s_window_nonempty

    def flags(self):
        out = {c.name: c.satisfied for c in self.conditions}
        out.update(a_in_01=self.assignment.a_in_01, b_in_01=self.assignment.b_in_01,
                   beta1_in_01=self.assignment.beta1_in_01,
                   s_window=self.s_window_nonempty)
        return out


def closure_2a_expanded(alpha, gamma, rho):
    """Left side of the first young-closure condition written in ``alpha, gamma, rho``."""
    top = (1.0 - gamma) * (1.0 - alpha) + rho
    return (1.0 + 4.0 / (3.0 * alpha)) * (2.0 / alpha) * top + (2.0 + 4.0 / alpha) * gamma


def check_closure(asg):
    """Evaluate the four Young-closure conditions by two independent routes.

    The numeric route forms the conjugate exponents explicitly.  The
    algebraic route uses the reduced forms: ``a >= 0``; always true;
    the expanded linear inequality in ``alpha, gamma, rho``; and
    ``beta_1 >= (1 + 6 gamma)/4``.
    """
    a, b, beta1, gamma = asg.a, asg.b, asg.beta1, asg.gamma
    # x = 3/(2(1-b)) must exceed 1 for the conjugate to exist
    ok_b = -0.5 < b < 1.0
    ok_beta1 = -0.5 < beta1 < 1.0
    xb = conjugate(3.0 / (2.0 * (1.0 - b))) if ok_b else math.nan
    xbeta = conjugate(3.0 / (2.0 * (1.0 - beta1))) if ok_beta1 else math.nan

    def cond(name, lhs, rhs, algebraic, statement, defined):
        sat = bool(defined and lhs <= rhs + CMP_EPS)
        return Condition(name, lhs, rhs, sat, bool(defined and algebraic), statement)

    conds = (
        cond("closure-1a", (2.0 - a + 4.0 * b) * xb, 6.0, a >= -CMP_EPS,
             "(2-a+4b)(3/(2(1-b)))' <= 6", ok_b),
        cond("closure-1b", 4.0 * beta1 * xbeta, 6.0, True,
             "4 beta1 (3/(2(1-beta1)))' <= 6", ok_beta1),
        cond("closure-2a", (a + 2.0 * gamma) * xb, 2.0,
             closure_2a_expanded(asg.alpha, gamma, asg.rho) <= 2.0 + CMP_EPS,
             "(a+2 gamma)(3/(2(1-b)))' <= 2", ok_b),
        cond("closure-2b", xbeta, 2.0 / (2.0 * gamma + 1.0),
             beta1 >= (1.0 + 6.0 * gamma) / 4.0 - CMP_EPS,
             "(3/(2(1-beta1)))' <= 2/(2 gamma+1)", ok_beta1),
    )
    return ClosureReport(asg, conds, ok_b and ok_beta1, asg.s_window.nonempty)


def rho_extrapolation(alpha, gamma, rhos=None):
    """Margins ``rhs - lhs`` of closure-2a for decreasing ``rho`` and their limit.

    ``a`` is affine in ``rho`` and the margin is smooth, so a quadratic fit
    in ``rho`` through the samples extrapolates the ``rho -> 0`` limit; a
    limit of zero marks a condition that only holds in the open sense.
    """
    rhos = np.asarray(rhos if rhos is not None else 10.0 ** -np.arange(2, 11), dtype=float)
    margins = np.array([2.0 - closure_2a_expanded(alpha, gamma, r) for r in rhos])
    coef = np.polyfit(rhos, margins, 2)
    limit = float(np.polyval(coef, 0.0))
    return {"rho": rhos.tolist(), "margin": margins.tolist(), "limit": limit,
            "exact_limit": 2.0 - closure_2a_expanded(alpha, gamma, 0.0)}


# --------------------------------------------------------------------------
# Optimisation over gamma


@dataclass
class OptimumReport:
    gamma0: float
    alpha_cr: float
    gamma0_closed: float = GAMMA0
    alpha_cr_closed: float = ALPHA_CR
    oracle_gamma: float = math.nan
    oracle_alpha: float = math.nan
    curve_values: dict = field(default_factory=dict)
    iterations: int = 0

    @property
    def gamma_gap(self):
        return abs(self.gamma0 - self.gamma0_closed)

    @property
    def alpha_gap(self):
        return abs(self.alpha_cr - self.alpha_cr_closed)

    @property
    def oracle_gap(self):
        return max(abs(self.gamma0 - self.oracle_gamma), abs(self.alpha_cr - self.oracle_alpha))

    def to_dict(self):
        return {"gamma0": self.gamma0, "alpha_cr": self.alpha_cr,
                "closed_form_gap": max(self.gamma_gap, self.alpha_gap),
                "gamma0_closed": self.gamma0_closed, "alpha_cr_closed": self.alpha_cr_closed,
                "oracle_gamma": self.oracle_gamma, "oracle_alpha": self.oracle_alpha,
                "oracle_gap": self.oracle_gap, "curve_values": self.curve_values,
                "iterations": self.iterations}


def golden_section(f, lo, hi, tol=1e-14, max_iter=200):
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x), iterations, trace)``."""
    trace = [(lo, hi)]
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    it = 0
    while hi - lo > tol:
        it += 1
        if it > max_iter:
            raise OptimizationError(f"golden section did not reach width {tol:g}", trace)
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
        trace.append((lo, hi))
    x = 0.5 * (lo + hi)
    return x, f(x), it, trace


def brute_force_min(f, lo, hi, points=10_000, tol=1e-14, max_levels=20):
    """Grid minimum refined by repeated zooms onto ``+-2`` cells around the best point."""
    level = 0
    while True:
        xs = np.linspace(lo, hi, points)
        vals = np.array([f(x) for x in xs])
        i = int(np.argmin(vals))
        cell = xs[1] - xs[0]
        if cell < tol or level >= max_levels:
            return float(xs[i]), float(vals[i])
        lo, hi = float(xs[max(i - 2, 0)]), float(xs[min(i + 2, points - 1)])
        level += 1


def optimize_gamma(tol=1e-14, oracle=True, oracle_points=10_000):
    """Minimise :func:`envelope` over ``gamma`` in (0, 1/2) by golden section.

    The bracket is checked first (interior value below both ends); an
    independent zoomed grid search is run as an oracle when ``oracle``.
    """
    eps = 1e-9
    lo, hi = eps, 0.5 - eps
    mid = 0.5 * (lo + hi)
    samples = np.linspace(lo, hi, 65)
    vals = [envelope(g) for g in samples]
    k = int(np.argmin(vals))
    if not (vals[k] < vals[0] and vals[k] < vals[-1]):
        raise OptimizationError("envelope minimum is not interior to (0, 1/2)",
                                [(lo, mid, hi)])
    # narrow to the sampled basin so the golden section sees a unimodal piece
    blo, bhi = samples[max(k - 1, 0)], samples[min(k + 1, len(samples) - 1)]
    g, val, it, _ = golden_section(envelope, float(blo), float(bhi), tol=tol)
    g, val = float(g), float(val)
    report = OptimumReport(gamma0=g, alpha_cr=val, iterations=it)
    report.curve_values = {
        "alpha_one": alpha_one(g),
        "alpha_beta1": alpha_beta1_bound(g),
        "alpha_cr_of_gamma": alpha_cr_of_gamma(g),
    }
    if oracle:
        og, ov = brute_force_min(envelope, lo, hi, points=oracle_points)
        report.oracle_gamma, report.oracle_alpha = og, ov
    return report


# --------------------------------------------------------------------------
# Feasibility tables


FLAG_NAMES = ("a_in_01", "b_in_01", "beta1_in_01", "closure-1a", "closure-1b",
              "closure-2a", "closure-2b", "s_window")


@dataclass
class FeasibilityTable:
    gamma: float
    rho: float
    rows: list

    @property
    def all_in_range(self):
        return all(r["a_in_01"] and r["b_in_01"] and r["beta1_in_01"] for r in self.rows)

    @property
    def all_feasible(self):
        return all(r["all"] for r in self.rows)

    def write_csv(self, path):
        cols = ["alpha", "a", "b", "beta1", *FLAG_NAMES, "all"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([f"{r[c]:.17g}" if isinstance(r[c], float) else int(r[c])
                            for c in cols])
        return Path(path)

    def to_json(self):
        return json.dumps({"gamma": self.gamma, "rho": self.rho, "rows": self.rows},
                          indent=2)


def feasibility_table(gamma=GAMMA0, alpha_grid=None, rho=DEFAULT_RHO, points=200):
    """Indices and closure flags along ``alpha_grid`` (default: ``points`` values in
    ``(alpha_cr(gamma) + 1e-6, 1 - 1e-6)``)."""
    lo = alpha_cr_of_gamma(gamma)
    if alpha_grid is None:
        alpha_grid = np.linspace(lo + 1e-6, 1.0 - 1e-6, points)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    if np.any(alpha_grid <= lo) or np.any(alpha_grid >= 1.0):
        raise DomainError(f"alpha grid must lie in (alpha_cr(gamma), 1) = ({lo:.9f}, 1)")
    rows = []
    for alpha in alpha_grid:
        rep = check_closure(make_assignment(float(alpha), gamma, rho))
        asg = rep.assignment
        row = {"alpha": float(alpha), "a": asg.a, "b": asg.b, "beta1": asg.beta1}
        row.update(rep.flags())
        row["all"] = rep.feasible
        rows.append(row)
    return FeasibilityTable(gamma, rho, rows)


def gnuplot_script(csv_name="feasibility.csv", gamma=GAMMA0):
    """A gnuplot script plotting ``a, b, beta_1`` against ``alpha`` from the CSV."""
    return "\n".join([
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'alpha'",
        f"set title 'a, b, beta_1 at gamma = {gamma:.6f}'",
        "set yrange [0:1]",
        "set grid",
        f"plot '{csv_name}' using 1:2 with lines lw 2, \\",
        f"     '{csv_name}' using 1:3 with lines lw 2, \\",
        f"     '{csv_name}' using 1:4 with lines lw 2",
        "",
    ])
