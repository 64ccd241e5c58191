import json
import math
from dataclasses import replace

import numpy as np
import pytest

from fracbou import diagnostics as dg
from fracbou import solver as so
from fracbou import spectral as sp


def state_of(n, omega, theta, alpha=0.85, **kw):
    g = sp.make_grid(n)
    w = sp.SpectralField.from_function(g, omega)
    th = sp.SpectralField.from_function(g, theta)
    return so.state_from_fields(w, th, alpha, **kw)


def zero(a, b):
    return 0 * a


@pytest.fixture(scope="module")
def short_run():
    cfg = so.SolverConfig(n=64, seed=0, dt=1e-3, t_end=0.5, diag_every=0.05)
    series, _ = so.run(cfg)
    return cfg, series


# --------------------------------------------------------------------------
# records


def test_zero_state_record():
    rec = dg.record(state_of(32, zero, zero))
    for name in dg.RECORD_FIELDS:
        assert getattr(rec, name) == 0.0, name


def test_theta_cos_norms():
    rec = dg.record(state_of(32, zero, lambda a, b: np.cos(a)))
    assert rec.theta_Linf == pytest.approx(1.0, abs=1e-14)
    assert rec.theta_L2 == pytest.approx(math.pi * math.sqrt(2), rel=1e-14)
    # int cos^4 over the torus is 4 pi^2 * 3/8
    assert rec.theta_L4 == pytest.approx((4 * math.pi**2 * 3 / 8) ** 0.25, rel=1e-13)


def test_grad_u_G_for_cos2():
    rec = dg.record(state_of(32, lambda a, b: np.cos(2 * a), zero))
    assert rec.grad_uG_Linf == pytest.approx(1.0, rel=1e-12)


def test_grad_sup_oracle():
    st = so.init_state(so.SolverConfig(n=32, seed=2, band=4.0))
    u1, u2 = st.u_G
    # oracle: dense evaluation of the gradient on a 16x finer grid
    fine = [sp.upsample(sp.derivative(c, ax), 16).values for c in (u1, u2) for ax in (0, 1)]
    dense = float(np.sqrt(sum(d * d for d in fine)).max())
    got = dg.grad_sup(st.u_G)
    assert got <= dense * (1 + 1e-12)
    assert got == pytest.approx(dense, rel=1e-2)


def test_besov_single_block_mode():
    alpha = 0.85
    s = 3 * alpha - 2
    rec = dg.record(state_of(64, lambda a, b: np.cos(4 * a), zero, alpha=alpha))
    # |k| = 4 = 2^2 sits where block 2 equals 1 and its neighbours vanish
    l6 = (4 * math.pi**2 * 5 / 16) ** (1 / 6)
    assert rec.G_besov == pytest.approx(2 ** (2 * s) * l6, rel=1e-12)
    assert rec.G_L6 == pytest.approx(l6, rel=1e-12)


def test_series_invariants(short_run):
    _, series = short_run
    for name in dg.RECORD_FIELDS:
        col = series.column(name)
        assert np.all(np.isfinite(col))
        if name != "theta_mean":
            assert np.all(col >= 0)
    assert np.all(np.diff(series.column("diss_theta")) >= 0)
    assert np.all(np.diff(series.column("diss_G")) >= 0)
    assert np.all(np.diff(series.t) > 0)


def test_series_rejects_non_increasing_time(short_run):
    _, series = short_run
    s = dg.DiagnosticSeries(list(series.records[:2]))
    with pytest.raises(ValueError):
        s.append(series.records[0])


def test_csv_round_trip_and_determinism(tmp_path, short_run):
    cfg, series = short_run
    a = series.write_csv(tmp_path / "a.csv")
    again, _ = so.run(cfg)
    b = again.write_csv(tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    back = dg.DiagnosticSeries.read_csv(a)
    assert [r.as_row() for r in back.records] == [r.as_row() for r in series.records]
    assert a.read_text().splitlines()[0] == ",".join(dg.RECORD_FIELDS)


# --------------------------------------------------------------------------
# checks


def test_pure_diffusion_max_principle():
    cfg = so.SolverConfig(n=32, seed=1, nonlinear=False, dt=0.01, t_end=1.0, diag_every=0.1)
    series, _ = so.run(cfg)
    for q in (2, 4, math.inf):
        v = dg.check_max_principle(series, q, dg.discretization_tol(cfg.dt, 2, 1.0))
        assert v.passed
    assert np.all(np.diff(series.column("theta_L2")) < 0)


def test_injected_growth_detected(short_run):
    cfg, series = short_run
    tol = dg.discretization_tol(cfg.dt, cfg.order, 1.0)
    assert dg.check_max_principle(series, math.inf, tol).passed
    # the factor must lift the decayed values back above the initial one
    later = series.column("theta_Linf")[series.t >= 0.3 - 1e-12]
    factor = 1.01 * series.column("theta_Linf")[0] / later.min()
    bad = dg.inject_growth(series, factor, t_from=0.3)
    v = dg.check_max_principle(bad, math.inf, tol)
    assert not v.passed
    assert v.worst_t >= 0.3 - 1e-12
    verdicts = dg.evaluate(bad, cfg.alpha, cfg.kappa, cfg.dt, cfg.order)
    assert not dg.all_passed(verdicts)


def test_injected_growth_in_G_detected(short_run):
    cfg, series = short_run
    recs = [replace(r, G_L6=3.0 * math.exp(0.5 * r.t)) for r in series.records]
    v = dg.check_G_L6(dg.DiagnosticSeries(recs))
    assert not v.passed
    assert v.worst_value == pytest.approx(0.5, rel=1e-10)
    assert v.info["sup"] == pytest.approx(3.0 * math.exp(0.5 * series.t[-1]))


def test_energy_identity_linear_mode():
    errs = []
    for dt in (0.01, 0.005):
        st = state_of(32, zero, lambda a, b: np.cos(2 * a), alpha=0.5)
        cfg = so.SolverConfig(n=32, alpha=0.5, nonlinear=False, dt=dt, t_end=1.0, diag_every=0.1)
        series, _ = so.run(cfg, state=st)
        v = dg.check_energy_identities(series)["theta_drift"]
        assert v.passed
        errs.append(v.worst_value)
    assert errs[1] < 1e-4
    assert abs(errs[0] / errs[1] - 4) < 0.3


def test_zero_buoyancy_u_energy_nonincreasing():
    st = state_of(32, lambda a, b: np.sin(a) * np.cos(2 * b), zero)
    series, _ = so.run(so.SolverConfig(n=32, dt=0.01, t_end=1.0, diag_every=0.1), state=st)
    assert np.all(np.diff(series.column("u_L2")) <= 1e-15)
    assert np.all(np.diff(series.column("G_L6")) <= 1e-15)
    verdicts = dg.check_energy_identities(series)
    assert verdicts["u_bound_ok"].passed
    assert verdicts["G_L2_bounded"].passed
    assert dg.check_G_L6(series).worst_value < 0


def test_besov_skip_below_threshold(short_run):
    _, series = short_run
    out = dg.check_besov_and_lipschitz(series, 0.75)
    for v in out.values():
        assert v.skipped and v.passed
        assert v.to_dict()["skipped"] is True


def test_evaluate_and_verdict_json(tmp_path, short_run):
    cfg, series = short_run
    verdicts = dg.evaluate(series, cfg.alpha, cfg.kappa, cfg.dt, cfg.order)
    assert dg.all_passed(verdicts)
    assert set(verdicts) == {"max_principle_L2", "max_principle_L4", "max_principle_Linf",
                             "theta_drift", "u_bound_ok", "G_L2_bounded", "G_L6_bounded",
                             "G_besov_bounded", "grad_uG_bounded"}
    path = series.write_verdicts(tmp_path / "v.json")
    data = json.loads(path.read_text())
    for entry in data.values():
        assert {"pass", "worst_value", "worst_t", "tolerance"} <= set(entry)


def test_growth_slope():
    t = np.linspace(0, 2, 21)
    assert dg.growth_slope(t, 3 * np.exp(0.5 * t)) == pytest.approx(0.5, rel=1e-12)
    assert dg.growth_slope(t, np.zeros_like(t)) == -math.inf


def test_need_two_records():
    with pytest.raises(ValueError):
        dg.check_max_principle(dg.DiagnosticSeries(), 2, 1e-6)


@pytest.mark.slow
def test_max_principle_reference_seeds_n64():
    for seed in range(5):
        cfg = so.SolverConfig(n=64, alpha=0.85, dt=1e-3, t_end=5.0, diag_every=0.1, seed=seed)
        series, _ = so.run(cfg)
        verdicts = dg.evaluate(series, cfg.alpha, cfg.kappa, cfg.dt, cfg.order)
        for q in ("L2", "L4", "Linf"):
            assert verdicts[f"max_principle_{q}"].passed, (seed, q)
        assert verdicts["u_bound_ok"].passed
