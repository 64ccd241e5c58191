"""Pseudospectral integration of the fractionally dissipated Boussinesq system.

Vorticity form on the periodic square::

    omega_t + u . grad omega + nu Lambda^alpha omega = d1 theta
    theta_t + u . grad theta + kappa Lambda^beta theta = 0
    u = grad_perp Laplace^{-1} omega

The dissipation is diagonal in Fourier space and is integrated exactly by an
integrating factor; the advection and buoyancy terms are advanced by an
explicit Runge-Kutta combination.  Products are dealiased by the 2/3 rule.
"""
from __future__ import annotations

import configparser
import logging
import math
from dataclasses import asdict, dataclass, replace
from functools import cached_property, lru_cache

import numpy as np

from . import spectral as sp
from .errors import BlowUpError, ConfigurationError, StabilityError

log = logging.getLogger(__name__)

INIT_KINDS = ("taylor-green", "random-band", "file")
SCHEMES = ("rk2", "rk4")
SCHEME_ORDER = {"rk2": 2, "rk4": 4}


# --------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class SolverConfig:
    n: int = 128
    length: float = 2 * math.pi
    alpha: float = 0.85
    beta: float | None = None
    nu: float = 1.0
    kappa: float = 1.0
    critical: bool = True
    nonlinear: bool = True
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: str = "rk2"
    cfl: float = 1.0
    ceiling: float = 1e6
    diag_every: float = 0.1
    snapshot_every: float = 0.0
    init: str = "random-band"
    seed: int = 0
    band: float = 4.0
    amplitude: float = 1.0
    omega_file: str | None = None
    theta_file: str | None = None

    @property
    def beta_value(self):
        return 1.0 - self.alpha if self.beta is None else self.beta

    @property
    def order(self):
        return SCHEME_ORDER[self.scheme]

    def validate(self):
        """Raise :class:`ConfigurationError` on the first invalid setting."""
        sp.make_grid(self.n, self.length)
        alpha, beta = self.alpha, self.beta_value
        if not 0 < alpha <= 1:
            raise ConfigurationError(f"alpha must lie in (0, 1], got {alpha}")
        if not 0 < beta <= 1:
            raise ConfigurationError(
                f"beta must lie in (0, 1], got {beta} (beta > 0 is required)")
        if self.critical and abs(alpha + beta - 1) > 1e-12:
            raise ConfigurationError(
                f"alpha + beta = {alpha + beta} != 1; set critical = false to override")
        if self.nu < 0 or self.kappa < 0:
            raise ConfigurationError("nu and kappa must be nonnegative")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ConfigurationError(f"t_end must be nonnegative, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.cfl > 0 or not self.ceiling > 0:
            raise ConfigurationError("cfl and ceiling must be positive")
        if self.diag_every < 0 or self.snapshot_every < 0:
            raise ConfigurationError("output cadences must be nonnegative")
        if self.init not in INIT_KINDS:
            raise ConfigurationError(f"init must be one of {INIT_KINDS}, got {self.init!r}")
        if self.init == "random-band":
            if not 1 <= self.band <= self.n / 4:
                raise ConfigurationError(
                    f"band must lie in [1, n/4] = [1, {self.n / 4:g}], got {self.band}")
            if self.amplitude < 0:
                raise ConfigurationError("amplitude must be nonnegative")
        if self.init == "file" and not (self.omega_file and self.theta_file):
            raise ConfigurationError("init = file needs omega_file and theta_file")
        if self.nu == 0 or self.kappa == 0:
            log.warning("nu = %g, kappa = %g: inviscid configuration, outside the "
                        "regime where global regularity is known", self.nu, self.kappa)
        return self

    def to_dict(self):
        return asdict(self)


# INI layout: section -> {key: converter}
def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _opt_str(text):
    return text.strip() or None


SOLVER_KEYS = {
    "grid": {"n": int, "length": float},
    "physics": {"alpha": float, "beta": _opt_float, "nu": float, "kappa": float,
                "critical": _bool, "nonlinear": _bool},
    "time": {"dt": float, "t_end": float, "scheme": str.strip, "cfl": float,
             "ceiling": float, "diag_every": float, "snapshot_every": float},
    "init": {"kind": str.strip, "seed": int, "band": float, "amplitude": float,
             "omega_file": _opt_str, "theta_file": _opt_str},
}
_FIELD_ALIAS = {("init", "kind"): "init"}


def parse_settings(parser, known, overrides=()):
    """Apply ``section.key=value`` overrides to ``parser`` and check all keys.

    ``known`` maps section names to ``{key: converter}``; unknown sections or
    keys are errors.  Returns converted values keyed by ``(section, key)``.
    """
    for item in overrides:
        lhs, sep, value = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not (sep and dot and section and key):
            raise ConfigurationError(f"override {item!r} is not of the form section.key=value")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())
    out = {}
    for section in parser.sections():
        if section not in known:
            raise ConfigurationError(
                f"unknown section [{section}] (expected one of {sorted(known)})")
        for key, text in parser.items(section):
            if key not in known[section]:
                raise ConfigurationError(f"unknown key [{section}] {key}")
            try:
                out[(section, key)] = known[section][key](text)
            except ValueError as exc:
                raise ConfigurationError(f"[{section}] {key} = {text!r}: {exc}") from None
    return out


def read_ini(path=None, text=None):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        if path is not None:
            with open(path) as fh:
                parser.read_file(fh, source=str(path))
        elif text is not None:
            parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None
    return parser


def config_from_settings(settings, base=None):
    base = base or SolverConfig()
    kw = {}
    for (section, key), value in settings.items():
        if section in SOLVER_KEYS:
            kw[_FIELD_ALIAS.get((section, key), key)] = value
    return replace(base, **kw).validate()


def load_config(path=None, overrides=(), text=None, extra_sections=None):
    """Read an INI config into ``(SolverConfig, settings)``.

    Sections grid, physics, time and init feed the solver; ``extra_sections``
    (``{section: {key: converter}}``) declares any further sections allowed.
    """
    parser = read_ini(path, text)
    known = dict(SOLVER_KEYS)
    known.update(extra_sections or {})
    settings = parse_settings(parser, known, overrides)
    return config_from_settings(settings), settings


# --------------------------------------------------------------------------
# Operators on coefficient arrays


@dataclass(frozen=True)
class Operators:
    """Symbol arrays for one grid and parameter set (cached)."""

    grid: sp.SpectralGrid
    alpha: float
    beta: float
    nu: float
    kappa: float

    @cached_property
    def d1(self):
        return sp.derivative_multiplier(0).array(self.grid)

    @cached_property
    def d2(self):
        return sp.derivative_multiplier(1).array(self.grid)

    @cached_property
    def inv_lap(self):
        return sp.inverse_laplacian_multiplier().array(self.grid)

    @cached_property
    def riesz(self):
        return sp.riesz_alpha_multiplier(self.alpha).array(self.grid)

    @cached_property
    def lam_alpha(self):
        return sp.fractional_laplacian_multiplier(self.alpha).array(self.grid).real

    @cached_property
    def lam_beta(self):
        return sp.fractional_laplacian_multiplier(self.beta).array(self.grid).real

    @cached_property
    def forcing_G(self):
        """Symbol of ``kappa Lambda^{beta-alpha} d1 + (1 - nu) d1``."""
        lam = sp.fractional_laplacian_multiplier(self.beta - self.alpha).array(self.grid)
        return self.kappa * lam * self.d1 + (1.0 - self.nu) * self.d1

    @cached_property
    def mask(self):
        return self.grid.dealias_mask

    def decay(self, dt):
        return _decay(self, float(dt))


@lru_cache(maxsize=64)
def _decay(ops, dt):
    e_w = np.exp(-dt * ops.nu * ops.lam_alpha)
    e_t = np.exp(-dt * ops.kappa * ops.lam_beta)
    return e_w, e_t


@lru_cache(maxsize=16)
def get_operators(grid, alpha, beta, nu=1.0, kappa=1.0):
    return Operators(grid, float(alpha), float(beta), float(nu), float(kappa))


def _velocity_hat(ops, omega_hat):
    psi = omega_hat * ops.inv_lap
    return -ops.d2 * psi, ops.d1 * psi


def _advect_hat(ops, u1, u2, f_hat):
    """Dealiased ``P(u . grad f)`` from physical velocity and coefficients of f."""
    n = ops.grid.n
    f1 = sp.inverse(ops.d1 * f_hat, n)
    f2 = sp.inverse(ops.d2 * f_hat, n)
    return sp.forward(u1 * f1 + u2 * f2) * ops.mask


def _rhs_hat(ops, w_hat, t_hat, nonlinear=True):
    """Nonlinear and forcing tendencies ``(d omega, d theta)`` in coefficient space."""
    dw = ops.d1 * t_hat
    if not nonlinear:
        return dw, np.zeros_like(t_hat)
    n = ops.grid.n
    u1h, u2h = _velocity_hat(ops, w_hat)
    u1 = sp.inverse(u1h, n)
    u2 = sp.inverse(u2h, n)
    dw = dw - _advect_hat(ops, u1, u2, w_hat)
    dt_ = -_advect_hat(ops, u1, u2, t_hat)
    return dw, dt_


# --------------------------------------------------------------------------
# State


@dataclass(frozen=True, eq=False)
class FlowState:
    """Immutable snapshot ``(t, omega, theta)`` with derived fields cached on demand."""

    grid: sp.SpectralGrid
    t: float
    omega_hat: np.ndarray
    theta_hat: np.ndarray
    alpha: float
    beta: float
    nu: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("omega_hat", "theta_hat"):
            a = np.array(getattr(self, name), dtype=complex)
            if a.shape != self.grid.spectral_shape:
                raise ConfigurationError(f"{name} has shape {a.shape}")
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        # the vorticity of a periodic velocity has zero mean
        if self.omega_hat[0, 0] != 0:
            w = self.omega_hat.copy()
            w[0, 0] = 0
            w.flags.writeable = False
            object.__setattr__(self, "omega_hat", w)

    @cached_property
    def ops(self):
        return get_operators(self.grid, self.alpha, self.beta, self.nu, self.kappa)

    @cached_property
    def omega(self):
        return sp.SpectralField(self.grid, coeffs=self.omega_hat)

    @cached_property
    def theta(self):
        return sp.SpectralField(self.grid, coeffs=self.theta_hat)

    @cached_property
    def psi(self):
        return sp.SpectralField(self.grid, coeffs=self.omega_hat * self.ops.inv_lap)

    @cached_property
    def u(self):
        u1, u2 = _velocity_hat(self.ops, self.omega_hat)
        return sp.SpectralField(self.grid, coeffs=u1), sp.SpectralField(self.grid, coeffs=u2)

    @cached_property
    def G(self):
        return compute_G(self)

    @cached_property
    def u_G(self):
        return velocity_split(self)[0]

    @cached_property
    def u_theta(self):
        return velocity_split(self)[1]

    def with_time(self, t, omega_hat, theta_hat):
        return FlowState(self.grid, t, omega_hat, theta_hat, self.alpha, self.beta,
                         self.nu, self.kappa)

    def max_speed(self):
        u1, u2 = self.u
        return float(np.max(np.abs(u1.values)) + np.max(np.abs(u2.values)))


def state_from_fields(omega, theta, alpha, beta=None, nu=1.0, kappa=1.0, t=0.0):
    beta = 1.0 - alpha if beta is None else beta
    return FlowState(omega.grid, float(t), omega.coeffs, theta.coeffs, alpha, beta, nu, kappa)


def _random_band(grid, rng, band, amplitude):
    """Random real field with modes ``1 <= |k| <= band`` and rms ``amplitude``."""
    kmag = np.hypot(grid.k1_index, grid.k2_index)
    shell = (kmag >= 1) & (kmag <= band)
    c = (rng.standard_normal(grid.spectral_shape)
         + 1j * rng.standard_normal(grid.spectral_shape)) * shell
    f = sp.SpectralField(grid, coeffs=c)
    # round trip through physical space enforces Hermitian symmetry
    f = sp.SpectralField(grid, values=f.values)
    rms = f.rms()
    if rms == 0 or amplitude == 0:
        return sp.SpectralField.zeros(grid)
    return f * (amplitude / rms)


def init_state(config):
    """Initial state for ``config`` (deterministic under a fixed seed)."""
    config.validate()
    grid = sp.make_grid(config.n, config.length)
    alpha, beta = config.alpha, config.beta_value
    if config.init == "taylor-green":
        s = grid.scale
        omega = sp.SpectralField.from_function(
            grid, lambda a, b: 2 * np.sin(s * a) * np.sin(s * b))
        theta = sp.SpectralField.from_function(grid, lambda a, b: np.cos(s * a))
    elif config.init == "random-band":
        rng = np.random.default_rng(config.seed)
        omega = _random_band(grid, rng, config.band, config.amplitude)
        theta = _random_band(grid, rng, config.band, config.amplitude)
    else:
        omega, _ = sp.load_snapshot(config.omega_file)
        theta, _ = sp.load_snapshot(config.theta_file)
        for name, f in (("omega", omega), ("theta", theta)):
            if f.grid != grid:
                raise ConfigurationError(
                    f"{name} file grid n={f.grid.n}, length={f.grid.length} does not "
                    f"match the configured n={grid.n}, length={grid.length}")
        omega = sp.dealias(omega)
        theta = sp.dealias(theta)
    return state_from_fields(omega, theta, alpha, beta, config.nu, config.kappa)


# --------------------------------------------------------------------------
# Tendencies and the G variable


def nonlinear_rhs(state, nonlinear=True):
    """``(-P(u.grad omega) + d1 theta, -P(u.grad theta))`` as fields."""
    dw, dth = _rhs_hat(state.ops, state.omega_hat, state.theta_hat, nonlinear)
    if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(dth))):
        raise BlowUpError(f"non-finite tendency at t={state.t}", state.t)
    return sp.SpectralField(state.grid, coeffs=dw), sp.SpectralField(state.grid, coeffs=dth)


def compute_G(state):
    """``G = omega - R_alpha theta``."""
    return sp.SpectralField(state.grid,
                            coeffs=state.omega_hat - state.ops.riesz * state.theta_hat)


def velocity_split(state):
    """``(u_G, u_theta)`` with ``u_G = BS(G)`` and ``u_theta = BS(R_alpha theta)``."""
    ops = state.ops
    g1, g2 = _velocity_hat(ops, state.omega_hat - ops.riesz * state.theta_hat)
    t1, t2 = _velocity_hat(ops, ops.riesz * state.theta_hat)
    f = lambda c: sp.SpectralField(state.grid, coeffs=c)  # noqa: E731
    return (f(g1), f(g2)), (f(t1), f(t2))


def g_tendency_hat(state):
    """Right side of the G equation minus the ``nu Lambda^alpha G`` term.

    ``-P(u.grad G) + [R_alpha, u.grad] theta + kappa Lambda^{beta-alpha} d1 theta
    + (1 - nu) d1 theta``, with the commutator assembled from dealiased products.
    """
    ops = state.ops
    n = state.grid.n
    u1h, u2h = _velocity_hat(ops, state.omega_hat)
    u1 = sp.inverse(u1h, n)
    u2 = sp.inverse(u2h, n)
    r_theta = ops.riesz * state.theta_hat
    G = state.omega_hat - r_theta
    comm = ops.riesz * _advect_hat(ops, u1, u2, state.theta_hat) - _advect_hat(ops, u1, u2, r_theta)
    return -_advect_hat(ops, u1, u2, G) + comm + ops.forcing_G * state.theta_hat


def g_residual(history, dt):
    """``L^2`` norm of the G-equation residual at the middle of three states.

    The time derivative is the central difference ``(G(t+dt) - G(t-dt)) / 2dt``.
    """
    if len(history) < 3:
        raise ConfigurationError("g_residual needs three consecutive states")
    prev, mid, nxt = history[-3:]
    if not (math.isclose(mid.t - prev.t, dt, rel_tol=1e-9, abs_tol=1e-15)
            and math.isclose(nxt.t - mid.t, dt, rel_tol=1e-9, abs_tol=1e-15)):
        raise ConfigurationError("states are not spaced by dt")
    ops = mid.ops
    Gp = prev.omega_hat - ops.riesz * prev.theta_hat
    Gn = nxt.omega_hat - ops.riesz * nxt.theta_hat
    Gm = mid.omega_hat - ops.riesz * mid.theta_hat
    res = (Gn - Gp) / (2 * dt) + mid.nu * ops.lam_alpha * Gm - g_tendency_hat(mid)
    return sp.l2_norm_spectral(sp.SpectralField(mid.grid, coeffs=res))


# --------------------------------------------------------------------------
# Time stepping


def stable_dt(state, cfl=1.0):
    """Largest step allowed by ``dt * (max|u1| + max|u2|) <= cfl * dx``."""
    speed = state.max_speed()
    return math.inf if speed == 0 else cfl * state.grid.dx / speed


def _if_rk2(ops, w, th, dt, nonlinear):
    e_w, e_t = ops.decay(dt)
    n1w, n1t = _rhs_hat(ops, w, th, nonlinear)
    w1 = e_w * (w + dt * n1w)
    t1 = e_t * (th + dt * n1t)
    n2w, n2t = _rhs_hat(ops, w1, t1, nonlinear)
    w_new = e_w * (w + 0.5 * dt * n1w) + 0.5 * dt * n2w
    t_new = e_t * (th + 0.5 * dt * n1t) + 0.5 * dt * n2t
    return w_new, t_new


def _if_rk4(ops, w, th, dt, nonlinear):
    e_w, e_t = ops.decay(dt)
    h_w, h_t = ops.decay(0.5 * dt)
    k1w, k1t = _rhs_hat(ops, w, th, nonlinear)
    k2w, k2t = _rhs_hat(ops, h_w * (w + 0.5 * dt * k1w), h_t * (th + 0.5 * dt * k1t), nonlinear)
    k3w, k3t = _rhs_hat(ops, h_w * w + 0.5 * dt * k2w, h_t * th + 0.5 * dt * k2t, nonlinear)
    k4w, k4t = _rhs_hat(ops, e_w * w + dt * h_w * k3w, e_t * th + dt * h_t * k3t, nonlinear)
    w_new = e_w * w + dt / 6 * (e_w * k1w + 2 * h_w * (k2w + k3w) + k4w)
    t_new = e_t * th + dt / 6 * (e_t * k1t + 2 * h_t * (k2t + k3t) + k4t)
    return w_new, t_new


_STEPPERS = {"rk2": _if_rk2, "rk4": _if_rk4}


def step(state, dt, scheme="rk2", cfl=1.0, nonlinear=True, check=True):
    """Advance one integrating-factor Runge-Kutta step.

    ``rk2`` is Heun's method in the integrating-factor variables (order 2),
    ``rk4`` the classical four-stage scheme (order 4).  The linear semigroups
    ``exp(-dt nu |k|^alpha)`` and ``exp(-dt kappa |k|^beta)`` are exact.
    """
    if check and nonlinear:
        limit = stable_dt(state, cfl)
        if dt > limit:
            raise StabilityError(
                f"dt={dt:g} exceeds the advective limit {limit:.3g} at t={state.t:g}",
                suggested_dt=0.5 * limit)
    w, th = _STEPPERS[scheme](state.ops, state.omega_hat, state.theta_hat, dt, nonlinear)
    return state.with_time(state.t + dt, w, th)


def step_G_form(state, G_hat, dt):
    """One IF-RK2 step of the ``(G, theta)`` system; returns ``(state, G_hat)``.

    An independent route to G: it integrates the G equation itself and can be
    compared with :func:`compute_G` on the vorticity-form solution.
    """
    ops = state.ops
    e_g, e_t = ops.decay(dt)

    def rhs(g, th):
        s = state.with_time(state.t, g + ops.riesz * th, th)
        _, dth = _rhs_hat(ops, s.omega_hat, th)
        return g_tendency_hat(s), dth

    th = state.theta_hat
    n1g, n1t = rhs(G_hat, th)
    g1 = e_g * (G_hat + dt * n1g)
    t1 = e_t * (th + dt * n1t)
    n2g, n2t = rhs(g1, t1)
    g_new = e_g * (G_hat + 0.5 * dt * n1g) + 0.5 * dt * n2g
    t_new = e_t * (th + 0.5 * dt * n1t) + 0.5 * dt * n2t
    new = state.with_time(state.t + dt, g_new + ops.riesz * t_new, t_new)
    return new, g_new


def _check_finite(state, ceiling, series=None):
    w = state.omega.values
    th = state.theta.values
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(th))):
        raise BlowUpError(f"non-finite field at t={state.t:g}", state.t, series)
    peak = max(float(np.abs(w).max()), float(np.abs(th).max()))
    if peak > ceiling:
        raise BlowUpError(
            f"max field {peak:.3g} exceeds ceiling {ceiling:g} at t={state.t:g}; "
            "a halt inside the admissible regime indicates a numerical artifact",
            state.t, series)


def _cadence(every, dt):
    """Steps between outputs; 0 means 'first and last only'."""
    return 0 if every <= 0 else max(1, int(round(every / dt)))


def run(config, state=None, on_step=None):
    """Integrate to ``t_end``; returns ``(DiagnosticSeries, snapshots)``.

    Diagnostics are recorded every ``diag_every`` time units and at the end;
    the dissipation integrals are accumulated at every step.  ``snapshots``
    is a list of states at the snapshot cadence (always including the final
    state).  Blow-up and stability errors carry the partial series.
    """
    from .diagnostics import DiagnosticSeries, Recorder

    config.validate()
    state = init_state(config) if state is None else state
    recorder = Recorder(state)
    series = DiagnosticSeries(config=config.to_dict())
    series.append(recorder.record(state))
    snapshots = [state]
    dt = config.dt
    nsteps = int(round(config.t_end / dt))
    if not math.isclose(nsteps * dt, config.t_end, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigurationError(f"t_end={config.t_end} is not a multiple of dt={dt}")
    diag = _cadence(config.diag_every, dt)
    snap = _cadence(config.snapshot_every, dt)
    log.info("running %d steps of %s, dt=%g, n=%d", nsteps, config.scheme, dt, config.n)
    for i in range(1, nsteps + 1):
        try:
            new = step(state, dt, config.scheme, config.cfl, config.nonlinear)
            new = new.with_time(i * dt, new.omega_hat, new.theta_hat)
            _check_finite(new, config.ceiling, series)
        except StabilityError as exc:
            exc.series = series
            raise
        recorder.advance(new)
        state = new
        if on_step is not None:
            on_step(state)
        if (diag and i % diag == 0) or i == nsteps:
            series.append(recorder.record(state))
        if (snap and i % snap == 0) and i != nsteps:
            snapshots.append(state)
    if nsteps:
        snapshots.append(state)
    return series, snapshots
