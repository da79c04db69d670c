"""Command-line front end: ``fpheom {fit,propagate,analyze,verify,scan}``.

Exit codes: 0 success, 1 configuration/input error or failed verification,
2 fit non-convergence, 3 propagation divergence, 4 hierarchy budget refusal.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import hierarchy as H
from . import io
from .config import ConfigError, RunConfig, load_config
from .observables import (CorrelationResult, ShibaPrediction, WindowError, localization_verdict,
                          relax_to_steady_state, shiba_check, static_susceptibility,
                          two_time_correlation)
from .polefit import FitError, fit_decomposition, scan_K_vs_delta
from .spectrum import SpectrumError, sample
from .verify import SUITES, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_FIT, EXIT_DIVERGED, EXIT_BUDGET = 0, 1, 2, 3, 4

log = logging.getLogger("fpheom")


def _outdir(cfg: RunConfig, args) -> Path:
    d = Path(args.out) if getattr(args, "out", None) else Path(cfg.output.directory)
    if cfg.source and not d.is_absolute() and not getattr(args, "out", None):
        d = Path(cfg.source).parent / d
    d.mkdir(parents=True, exist_ok=True)
    return d


def _samples(cfg: RunConfig):
    return sample(cfg.spectrum_model(), cfg.spectrum.temperature, cfg.frequency_grid())


def cmd_fit(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(cfg, args)
    prefix = cfg.output.prefix
    samples = _samples(cfg)
    scale = float(np.max(np.abs(samples[1])))
    t0 = time.perf_counter()
    files, status, extra = [], "ok", {}
    try:
        res = fit_decomposition(samples, cfg.fit)
    except FitError as exc:
        wall = time.perf_counter() - t0
        status = "fit_not_converged"
        print(f"fit did not converge: {exc}", file=sys.stderr)
        ps = getattr(exc, "poles", None)
        if ps is not None:
            files.append(io.write_poles(out / f"{prefix}_poles.csv", ps,
                                        ["best-effort pole set from a non-converged fit"]))
        best = getattr(exc, "model", None)
        if best is not None:
            extra["best_error_relative"] = best.error / scale
        io.write_manifest(out / f"{prefix}_fit_manifest.json", "fit", cfg.snapshot(), files,
                          status=status, wall_seconds=wall, **extra)
        return EXIT_FIT
    wall = time.perf_counter() - t0
    rel = res.poles.fit_error / scale
    comments = [f"K = {res.K}", f"support points = {res.model.m}",
                f"pole-sum max error relative to max|S| = {rel:.3e}"]
    files.append(io.write_poles(out / f"{prefix}_poles.csv", res.poles, comments))
    files.append(io.write_decomposition(out / f"{prefix}_decomposition.csv", res.decomposition,
                                        comments + ["C(t) = sum_k d_k exp(-(gamma_k + i omega_k) t), t >= 0"]))
    io.write_manifest(out / f"{prefix}_fit_manifest.json", "fit", cfg.snapshot(), files,
                      K=res.K, support_points=res.model.m, iterations=res.iterations,
                      barycentric_error_relative=res.model.error / scale, pole_sum_error_relative=rel,
                      dropped_poles=res.poles.n_dropped, conjugate_mismatch=res.poles.conjugate_mismatch,
                      wall_seconds=wall)
    print(f"K = {res.K}  support points = {res.model.m}  relative error = {rel:.3e}  time = {wall:.2f} s")
    return EXIT_OK


def _initial(cfg: RunConfig):
    name = cfg.propagation.initial
    return cfg.system.ground_state() if name == "ground" else H.initial_rho(name)


def cmd_propagate(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(cfg, args)
    prefix = cfg.output.prefix
    dec = io.read_decomposition(args.decomposition)
    p = cfg.propagation
    meta = {"K": dec.K, "depth": cfg.truncation.depth, "per_mode_cap": cfg.truncation.per_mode_cap,
            "dt": p.dt, "method": p.method}
    manifest = out / f"{prefix}_propagate_manifest.json"
    try:
        space = H.build_space(dec.K, cfg.truncation, cfg.budget)
    except H.BudgetError as exc:
        print(f"refused: {exc}; raise [truncation] budget to override", file=sys.stderr)
        io.write_manifest(manifest, "propagate", cfg.snapshot(), status="budget_refused",
                          estimated_ado_count=exc.estimate,
                          estimated_bytes=H.estimate_memory_bytes(exc.estimate), **meta)
        return EXIT_BUDGET
    meta["ado_count"] = space.size
    t0 = time.perf_counter()
    G = H.build_generator(space, cfg.system, dec)
    try:
        if args.correlation:
            files, extra = _run_correlation(cfg, space, dec, G, out, prefix)
        else:
            tr = H.propagate(space, cfg.system, dec, H.factorized_state(space, _initial(cfg)),
                             p.t_final, p.dt, stride=p.stride, method=p.method, adaptive=p.adaptive,
                             bound=p.bound, generator=G)
            header = [f"K = {dec.K}, depth L = {space.depth}, per-mode cap = {space.truncation.per_mode_cap}",
                      f"dt = {p.dt}, method = {p.method}, ADOs = {space.size}"]
            files = [io.write_trajectory(out / f"{prefix}_trajectory.csv", tr, header)]
            extra = {"steps": tr.steps, "max_trace_residual": float(tr.trace_residual.max()),
                     "max_hermiticity_residual": float(tr.hermiticity_residual.max())}
            if args.checkpoint:
                H.save_checkpoint(args.checkpoint, space, tr.final)
    except H.DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        io.write_manifest(manifest, "propagate", cfg.snapshot(), status="diverged",
                          divergence_time=exc.time, wall_seconds=time.perf_counter() - t0, **meta)
        return EXIT_DIVERGED
    wall = time.perf_counter() - t0
    io.write_manifest(manifest, "propagate", cfg.snapshot(), files, wall_seconds=wall, **meta, **extra)
    print(f"ADOs = {space.size}  wrote {', '.join(str(f) for f in files)}  time = {wall:.1f} s")
    return EXIT_OK


def _run_correlation(cfg, space, dec, G, out, prefix):
    a, p = cfg.analysis, cfg.propagation
    ss = relax_to_steady_state(space, cfg.system, dec, tol=a.tol, t_max=a.t_max, dt=p.dt,
                               method=p.method, generator=G)
    if not ss.converged:
        log.warning("steady state not reached by t = %g (residual %.2e)", ss.time, ss.residual)
    spacing = p.dt * p.stride
    times = np.arange(int(round(p.t_final / spacing)) + 1) * spacing
    res = two_time_correlation(space, cfg.system, dec, ss.state, H.SIGMA_Z, times, dt=p.dt,
                               method=p.method, generator=G)
    f = io.write_series(out / f"{prefix}_correlation.csv",
                        {"time": res.times, "re_szz": res.values.real, "im_szz": res.values.imag},
                        [f"steady state: {ss.criterion} at t = {ss.time:g}, residual {ss.residual:.2e}",
                         f"<sigma_z> in steady state = {H.bloch(ss.state.rho)[2]:.17g}"])
    return [f], {"steady_state": ss.criterion, "steady_residual": ss.residual}


def cmd_analyze(args) -> int:
    cfg = load_config(args.config, args.set)
    a = cfg.analysis
    if a.kind in ("localization", "shiba") and not args.input:
        raise ConfigError(f"{a.kind} analysis needs --input")
    if a.kind == "localization":
        tab = io.read_trajectory(args.input)
        v = localization_verdict(tab["time"], tab["sigma_z"], a.threshold, a.fraction)
        report = {"mean_sigma_z": v.mean, "threshold": v.threshold, "window": v.window,
                  "verdict": "delocalized" if v.delocalized else "localized"}
    elif a.kind == "shiba":
        tab = io.read_table(args.input, ("time", "re_szz", "im_szz"))
        res = CorrelationResult(tab["time"], tab["re_szz"] + 1j * tab["im_szz"])
        sp = cfg.spectrum.params
        if cfg.spectrum.model != "subohmic":
            raise ConfigError("Shiba analysis needs the subohmic spectrum", "spectrum.model")
        pred = ShibaPrediction(sp["s"], sp["alpha"], sp["omega_c"], cfg.system.delta_x, args.chi_bar)
        window = None
        if a.window_lo is not None or a.window_hi is not None:
            window = (a.window_lo or 20.0 / cfg.system.delta_x, a.window_hi or 100.0 / cfg.system.delta_x)
        dec = io.read_decomposition(args.decomposition) if args.decomposition else None
        report = shiba_check(res, pred, window, dec).as_dict()
    else:
        if not args.decomposition:
            raise ConfigError("susceptibility analysis needs --decomposition")
        dec = io.read_decomposition(args.decomposition)
        space = H.build_space(dec.K, cfg.truncation, cfg.budget)
        chi = static_susceptibility(space, cfg.system, dec, a.d_epsilon, tol=a.tol, t_max=a.t_max,
                                    dt=cfg.propagation.dt, method=cfg.propagation.method)
        report = {"chi_bar": chi.chi_bar, "sigma_z_plus": chi.sz_plus, "sigma_z_minus": chi.sz_minus,
                  "converged": chi.converged}
    for k, v in report.items():
        print(f"{k} = {v}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == ["all"] else args.suite
    failed = 0
    for name in names:
        checks = run_suite(name)
        for c in checks:
            print(f"{name}: {c.line()}")
        failed += sum(not c.passed for c in checks)
    print(f"{'FAILED' if failed else 'OK'}: {failed} failing check(s)")
    return EXIT_CONFIG if failed else EXIT_OK


def cmd_scan(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(cfg, args)
    deltas = sorted((float(x) for x in args.deltas.split(",")), reverse=True)
    samples = _samples(cfg)
    t0 = time.perf_counter()
    try:
        rows = scan_K_vs_delta(samples, deltas, cfg.fit)
    except FitError as exc:
        print(f"scan failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    d = np.array([r[0] for r in rows])
    K = np.array([r[1] for r in rows], float)
    x = np.abs(np.log10(d))
    slope, corr = _linear_trend(x, K)
    f = io.write_series(out / f"{cfg.output.prefix}_scan.csv", {"delta": d, "abs_log10_delta": x, "K": K},
                        [f"least-squares slope dK/d|log10 delta| = {slope:.6g}, correlation = {corr:.6g}"])
    io.write_manifest(out / f"{cfg.output.prefix}_scan_manifest.json", "scan", cfg.snapshot(), [f],
                      slope=slope, correlation=corr, wall_seconds=time.perf_counter() - t0)
    for di, ki in zip(d, K):
        print(f"delta = {di:.0e}  K = {int(ki)}")
    print(f"slope = {slope:.3f}  correlation = {corr:.4f}")
    return EXIT_OK


def _linear_trend(x, y):
    if x.size < 2 or np.ptp(y) == 0:
        return 0.0, float("nan")
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, float(np.corrcoef(x, y)[0, 1])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fpheom", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP worker threads")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("config", nargs=None if needs_config else "?", help="INI configuration file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a configuration value (repeatable)")
        p.add_argument("--out", help="output directory (overrides [output] directory)")

    p = sub.add_parser("fit", help="fit the noise spectrum and write poles and decomposition")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("propagate", help="propagate the hierarchy and write a trajectory")
    common(p)
    p.add_argument("--decomposition", required=True, help="decomposition CSV from 'fit'")
    p.add_argument("--checkpoint", help="write the final ADO vector to this file")
    p.add_argument("--correlation", action="store_true",
                   help="relax to the steady state, then write S_zz(t) instead of a trajectory")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("analyze", help="localization, Shiba or susceptibility analysis")
    common(p)
    p.add_argument("--input", help="trajectory or correlation CSV")
    p.add_argument("--decomposition", help="decomposition CSV (susceptibility, Shiba relation)")
    p.add_argument("--chi-bar", type=float, default=None, help="static susceptibility for the Shiba relation")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("suite", nargs="+", choices=[*SUITES, "all"])
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scan", help="mode count K against fit tolerance delta")
    common(p)
    p.add_argument("--deltas", default="1e-3,1e-4,1e-5,1e-6,1e-7,1e-8,1e-9,1e-10")
    p.set_defaults(func=cmd_scan)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(args.threads):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (io.FormatError, SpectrumError, WindowError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except H.BudgetError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except H.DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
