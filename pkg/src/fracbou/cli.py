"""Command line entry point: ``fracbou {simulate,exponents,verify,scan}``.

Exit codes: 0 success, 1 a verdict or suite failed, 2 configuration error,
3 numerical blow-up, stability violation or an under-resolved scan.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as dg
from . import exponents as ex
from . import littlewood_paley as lp
from . import solver as so
from . import spectral as sp
from . import verification as vf
from .errors import (BlowUpError, ConfigurationError, DomainError, StabilityError)

log = logging.getLogger("fracbou")

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

OUTPUT_KEYS = {"dir": str.strip, "snapshot_format": str.strip, "format": str.strip}
CHECK_KEYS = {"max_principle_c": float, "drift_tol": float, "u_tol": float,
              "growth_ceiling": float, "inject_growth": float,
              "inject_column": str.strip}


def _float_list(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _seed_list(text):
    parts = text.replace(",", " ").split()
    if len(parts) == 1 and ":" not in parts[0]:
        return list(range(int(parts[0])))
    out = []
    for p in parts:
        if ":" in p:
            a, b = p.split(":")
            out.extend(range(int(a), int(b)))
        else:
            out.append(int(p))
    return out


SCAN_KEYS = {
    "scan": {"n": int, "alphas": _float_list, "seeds": _seed_list, "k_min": int,
             "k_max": int, "p": float, "tol": float, "rough_source": so._bool,
             "source_band": float, "bernstein_samples": int},
    "output": {"dir": str.strip},
}


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files, config, seed, wall):
    manifest = {
        "config": config,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": seed,
        "wall_clock_seconds": round(wall, 3),
        "threads": os.environ.get("FRACBOU_THREADS", "1"),
        "files": {Path(f).name: {"sha256": sha256(f), "bytes": Path(f).stat().st_size}
                  for f in sorted(files)},
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _write_series(series, out_dir, fmt):
    if fmt == "json":
        path = Path(out_dir) / "timeseries.json"
        rows = [dict(zip(dg.RECORD_FIELDS, r.as_row())) for r in series.records]
        path.write_text(json.dumps(rows, indent=1) + "\n")
        return path
    return series.write_csv(Path(out_dir) / "timeseries.csv")


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    extra = {"output": OUTPUT_KEYS, "checks": CHECK_KEYS}
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"init.seed={args.seed}")
    config, settings = so.load_config(args.config, overrides, extra_sections=extra)
    out_dir = Path(args.out_dir or settings.get(("output", "dir"), "run"))
    fmt = args.format or settings.get(("output", "format"), "csv")
    snap_fmt = settings.get(("output", "snapshot_format"), "binary")
    if fmt not in ("csv", "json") or snap_fmt not in ("binary", "text"):
        raise ConfigurationError("output format must be csv|json, snapshot_format binary|text")
    check = dg.CheckSettings(
        max_principle_c=settings.get(("checks", "max_principle_c"), 1.0),
        drift_tol=settings.get(("checks", "drift_tol"), 1e-4),
        u_tol=settings.get(("checks", "u_tol"), 1e-6),
        growth_ceiling=settings.get(("checks", "growth_ceiling"), 0.1),
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files = []
    try:
        series, snaps = so.run(config)
    except (BlowUpError, StabilityError) as exc:
        partial = getattr(exc, "series", None)
        if partial is not None and len(partial):
            files.append(_write_series(partial, out_dir, fmt))
        write_manifest(out_dir, files, config.to_dict(), config.seed, time.perf_counter() - t0)
        log.error("%s", exc)
        return EXIT_NUMERIC
    if len(series) < 2:
        raise ConfigurationError("t_end must be positive for the checks to run")
    factor = settings.get(("checks", "inject_growth"), 0.0)
    if factor and factor != 1.0:
        column = settings.get(("checks", "inject_column"), "theta_Linf")
        log.warning("injecting growth factor %g into %s (negative control)", factor, column)
        series = dg.inject_growth(series, factor, column=column)
    verdicts = dg.evaluate(series, config.alpha, config.kappa, config.dt, config.order, check)
    files.append(_write_series(series, out_dir, fmt))
    files.append(series.write_verdicts(out_dir / "verdicts.json"))
    for i, st in enumerate(snaps):
        for name, f in (("omega", st.omega), ("theta", st.theta)):
            path = out_dir / f"snap{i:04d}_{name}.dat"
            sp.save_snapshot(path, f, fmt=snap_fmt, t=st.t, quantity=name)
            files.append(path)
    write_manifest(out_dir, files, config.to_dict(), config.seed, time.perf_counter() - t0)
    for name, v in verdicts.items():
        state = "skip" if v.skipped else ("PASS" if v.passed else "FAIL")
        print(f"{state:4s} {name}: worst={v.worst_value:.6g} at t={v.worst_t:.6g} "
              f"(tol {v.tolerance:.3g})")
    return EXIT_OK if dg.all_passed(verdicts) else EXIT_VERDICT


# --------------------------------------------------------------------------
# exponents


def cmd_exponents(args):
    gamma = ex.GAMMA0 if args.gamma is None else args.gamma
    if not 0 < gamma < 0.5:
        raise ConfigurationError(f"--gamma must lie in (0, 1/2), got {gamma}")
    if args.alpha is not None and not 0 < args.alpha < 1:
        raise ConfigurationError(f"--alpha must lie in (0, 1), got {args.alpha}")
    if args.rho < 0:
        raise ConfigurationError(f"--rho must be nonnegative, got {args.rho}")
    if args.prior_q0 and args.alpha is None:
        raise ConfigurationError("--prior-q0 needs --alpha")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    did = False
    if args.optimize:
        rep = ex.optimize_gamma()
        print(f"gamma0 = {rep.gamma0:.6f}")
        print(f"alpha_cr = {rep.alpha_cr:.6f}")
        print(f"closed_form_gap = {max(rep.gamma_gap, rep.alpha_gap):.3e}")
        if out_dir:
            (out_dir / "summary.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
        did = True
    if args.prior_q0:
        print(f"q0 = {ex.q0_prior(args.alpha):.6f}")
        did = True
    if args.alpha is not None and not args.prior_q0:
        rep = ex.check_closure(ex.make_assignment(args.alpha, gamma, args.rho))
        a = rep.assignment
        print(f"alpha = {a.alpha:.6f}  gamma = {a.gamma:.6f}  rho = {a.rho:.3g}")
        print(f"a = {a.a:.6f}  b = {a.b:.6f}  beta1 = {a.beta1:.6f}")
        print(f"p1 = {a.p1:.6f}  p2 = {a.p2:.6f}  p3 = {a.p3:.6f}")
        print(f"s window = ({a.s_window.lo:.6f}, {a.s_window.hi:.6f})")
        for c in rep.conditions:
            print(f"{c.name}: {c.lhs:.6f} <= {c.rhs:.6f}  {'ok' if c.satisfied else 'FAIL'}")
        print(f"feasible = {rep.feasible}")
        if args.rho_limit:
            lim = ex.rho_extrapolation(args.alpha, gamma)
            print(f"closure-2a margin as rho -> 0: {lim['limit']:.6e} "
                  f"(exact {lim['exact_limit']:.6e})")
        did = True
    if args.table:
        table = ex.feasibility_table(gamma, rho=args.rho, points=args.points)
        path = (out_dir or Path(".")) / "feasibility.csv"
        table.write_csv(path)
        print(f"wrote {path} ({len(table.rows)} rows, all feasible: {table.all_feasible})")
        if args.gnuplot:
            gp = (out_dir or Path(".")) / "feasibility.gp"
            gp.write_text(ex.gnuplot_script(path.name, gamma))
            print(f"wrote {gp}")
        did = True
    if not did:
        raise ConfigurationError("nothing to do: pass --optimize, --alpha or --table")
    return EXIT_OK


# --------------------------------------------------------------------------
# verify


def cmd_verify(args):
    reports = vf.run_suite(args.suite, fault=args.fault)
    payload = {"pass": all(r.passed for r in reports), "suites": [r.to_dict() for r in reports]}
    text = json.dumps(payload, indent=2)
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "verify.json").write_text(text + "\n")
    if args.format == "json":
        print(text)
    else:
        for r in reports:
            for c in r.checks:
                print(f"{'PASS' if c.passed else 'FAIL'} {r.name}.{c.name}: "
                      f"{c.value:.6g} (tol {c.tolerance:.3g})")
    return EXIT_OK if payload["pass"] else EXIT_VERDICT


# --------------------------------------------------------------------------
# scan


def cmd_scan(args):
    parser = so.read_ini(args.config)
    settings = so.parse_settings(parser, SCAN_KEYS, args.set or [])
    get = lambda key, default: settings.get(("scan", key), default)  # noqa: E731
    n = get("n", 256)
    alphas = get("alphas", [0.6, 0.8])
    seeds = [args.seed] if args.seed is not None else get("seeds", list(range(10)))
    tol = get("tol", 0.15)
    p = get("p", 2.0)
    out_dir = Path(args.out_dir or settings.get(("output", "dir"), "scan"))
    grid = sp.make_grid(n)
    family = lp.build_family(grid)
    usable = lp.usable_scales(grid, family)
    k_range = list(range(get("k_min", usable[0] if usable else 0),
                         get("k_max", usable[-1] if usable else 0) + 1))
    ks = [k for k in k_range if k in usable]
    if len(ks) < 3:
        log.error("under-resolved k-range %s (resolved scales at n=%d: %s)", k_range, n, usable)
        return EXIT_NUMERIC
    for a in alphas:
        if not 0.5 < a < 1:
            raise ConfigurationError(f"scan alphas must lie in (1/2, 1), got {a}")
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"n": n, "k": ks, "tol": tol, "p": p, "runs": []}
    ok = True
    print(f"{'alpha':>6} {'seed':>5} {'slope_G':>9} {'theory':>7} {'slope_th':>9} {'theory':>7}")
    for alpha in alphas:
        for seed in seeds:
            fields_ = lp.synthetic_commutator_fields(
                grid, alpha, seed, source_band=get("source_band", 4.0),
                rough_source=get("rough_source", False))
            scan = lp.commutator_rate_scan(*fields_, alpha, k_range=ks, p=p, tol=tol)
            stem = f"commutator_a{alpha:g}_s{seed}"
            scan.write_csv(out_dir / f"{stem}_G.csv", "G")
            scan.write_csv(out_dir / f"{stem}_theta.csv", "theta")
            bern = _bernstein_samples(grid, seed, ks, get("bernstein_samples", 10))
            ok &= scan.passed and bern["all_within"]
            summary["runs"].append({"alpha": alpha, "seed": seed, "slope_G": scan.slope_G,
                                    "theory_G": scan.theory_G, "slope_theta": scan.slope_theta,
                                    "theory_theta": scan.theory_theta, "pass": scan.passed,
                                    "bernstein": bern})
            print(f"{alpha:6.2f} {seed:5d} {scan.slope_G:9.4f} {scan.theory_G:7.2f} "
                  f"{scan.slope_theta:9.4f} {scan.theory_theta:7.2f}")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK if ok else EXIT_VERDICT


def _bernstein_samples(grid, seed, ks, count):
    rng = np.random.default_rng(seed)
    ratios, within = [], True
    for i in range(count):
        j = ks[i % len(ks)]
        alpha = float(rng.uniform(0.1, 2.0))
        rep = lp.bernstein_check(vf.annulus_field(grid, j, rng), j, alpha)
        ratios.append(rep.lower_ratio)
        within &= rep.within
    return {"count": count, "all_within": bool(within),
            "min_ratio": min(ratios) if ratios else math.nan,
            "max_ratio": max(ratios) if ratios else math.nan}


# --------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="fracbou", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", default="WARNING",
                    choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="INI configuration file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a configuration key (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--format", choices=["csv", "json"])

    p = sub.add_parser("simulate", help="integrate the system and check monitored bounds")
    common(p, True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("exponents", help="exponent bookkeeping and the gamma optimisation")
    p.add_argument("--optimize", action="store_true")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float, default=ex.DEFAULT_RHO)
    p.add_argument("--prior-q0", action="store_true")
    p.add_argument("--table", action="store_true")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--gnuplot", action="store_true")
    p.add_argument("--rho-limit", action="store_true")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_exponents)

    p = sub.add_parser("verify", help="run property suites")
    p.add_argument("suite", choices=[*vf.SUITES, "all"])
    p.add_argument("--fault", choices=vf.FAULTS, help="inject a known defect")
    p.add_argument("--out-dir")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scan", help="commutator rate and Bernstein scans")
    common(p, True)
    p.set_defaults(func=cmd_scan)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, StabilityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
