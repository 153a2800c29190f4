"""Command-line front end for the experiment drivers.

Subcommands: find-wave, certify, linear-decay, nonlinear-decay, crossover,
damping-report, fit. Numeric output goes to CSV files in the run directory;
logs go to stderr. Exit codes: 0 success, 2 certification failed,
3 numerical divergence, 4 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CERTIFICATION = 2
EXIT_DIVERGENCE = 3
EXIT_CONFIG = 4


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_config(args):
    from .experiments import ExperimentConfig, canonical_params, load_config

    if args.config:
        return load_config(args.config, args.param)
    cfg = ExperimentConfig(params=canonical_params())
    for ov in args.param or []:
        doc = cfg.to_dict()
        key, _, raw = ov.partition("=")
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        try:
            node[parts[-1]] = json.loads(raw)
        except json.JSONDecodeError:
            node[parts[-1]] = raw
        cfg = ExperimentConfig.from_dict(doc)
    return cfg


def _prepare_wave(cfg, wave_file=None):
    from .experiments import find_stable_wave
    from .profile import wave_from_json

    if wave_file:
        wave = wave_from_json(Path(wave_file).read_text())
        from .bloch import certify_stability, critical_curve

        T = wave.params.period
        xi_grid = np.linspace(-np.pi / T, np.pi / T, 65)[:-1]
        report = certify_stability(wave, xi_grid, M=cfg.bloch_modes)
        xs = np.unique(np.concatenate([np.linspace(-1, 1, 81) * np.pi / T * 0.999, [0.0]]))
        curve = critical_curve(wave, xs, M=cfg.bloch_modes)
        return wave, report, curve
    scan = []
    wave, report, curve = find_stable_wave(cfg.params, n_points=cfg.n_points,
                                           M=cfg.bloch_modes, scan_log=scan)
    _log(f"wave search: {len(scan)} attempts, certified at "
         f"F={wave.params.forcing}, residual={wave.residual_norm:.2e}")
    return wave, report, curve


def cmd_find_wave(args) -> int:
    from .experiments import CertificationFailedError
    from .profile import wave_to_json

    cfg = _load_config(args)
    out = Path(args.output or "wave.json")
    scan = []
    try:
        from .experiments import find_stable_wave

        wave, report, curve = find_stable_wave(cfg.params, n_points=cfg.n_points,
                                               M=cfg.bloch_modes, scan_log=scan)
    except CertificationFailedError as exc:
        _log(f"certification failed: {exc}")
        (out.parent / (out.stem + ".scan.json")).write_text(json.dumps(scan, indent=1))
        return EXIT_CERTIFICATION
    out.write_text(wave_to_json(wave))
    (out.parent / (out.stem + ".scan.json")).write_text(json.dumps(scan, indent=1))
    (out.parent / (out.stem + ".report.json")).write_text(report.to_json())
    (out.parent / (out.stem + ".curve.json")).write_text(curve.to_json())
    _log(f"wave written to {out} (theta={report.theta:.4f}, d={curve.d:.4f})")
    return EXIT_OK


def cmd_certify(args) -> int:
    from .bloch import certify_stability, write_spectra_csv
    from .profile import LinearizedOperator, wave_from_json
    from .bloch import symmetric_modes, eig_with_left

    cfg = _load_config(args)
    wave = wave_from_json(Path(args.wave).read_text())
    T = wave.params.period
    xi_grid = np.linspace(-np.pi / T, np.pi / T, (args.n_xi or 64) + 1)[:-1]
    report = certify_stability(wave, xi_grid, M=cfg.bloch_modes)
    out = Path(args.output or "stability_report.json")
    out.write_text(report.to_json())
    op = LinearizedOperator.for_wave(wave)
    modes = symmetric_modes(cfg.bloch_modes)
    spectra = {float(xi): eig_with_left(op.dense_fourier(modes, xi))[0] for xi in xi_grid}
    write_spectra_csv(out.with_suffix(".spectra.csv"), spectra)
    _log(f"certification {'PASSED' if report.passed else 'FAILED'} "
         f"(theta={report.theta:.4f}); report at {out}")
    return EXIT_OK if report.passed else EXIT_CERTIFICATION


def _run_guarded(fn) -> int:
    from .evolve import BlowUpError, StepTooLargeError
    from .modulation import ConstraintViolatedError, FixedPointDivergedError
    from .profile import NoConvergenceError, SingularJacobianError

    try:
        fn()
        return EXIT_OK
    except (BlowUpError, StepTooLargeError, NoConvergenceError,
            SingularJacobianError, ConstraintViolatedError,
            FixedPointDivergedError) as exc:
        _log(f"numerical divergence: {type(exc).__name__}: {exc}")
        return EXIT_DIVERGENCE


def cmd_linear_decay(args) -> int:
    from .experiments import run_linear_decay

    cfg = _load_config(args)
    wave, report, curve = _prepare_wave(cfg, args.wave)

    def run():
        fitted = run_linear_decay(cfg, wave, curve, report)
        _log(json.dumps(fitted, indent=1))

    return _run_guarded(run)


def cmd_nonlinear_decay(args) -> int:
    from .experiments import run_nonlinear_decay

    cfg = _load_config(args)
    wave, report, curve = _prepare_wave(cfg, args.wave)

    def run():
        fitted = run_nonlinear_decay(cfg, wave, curve, report)
        _log(json.dumps(fitted, indent=1))

    return _run_guarded(run)


def cmd_crossover(args) -> int:
    from .experiments import run_crossover

    cfg = _load_config(args)
    wave, report, curve = _prepare_wave(cfg, args.wave)

    def run():
        fitted = run_crossover(cfg, wave, curve, report,
                               delta_fraction=args.delta_fraction)
        _log(json.dumps(fitted, indent=1))

    return _run_guarded(run)


def cmd_damping_report(args) -> int:
    from .bloch import critical_curve
    from .damping import damping_report, write_damping_csv
    from .evolve import load_trajectory
    from .modulation import solve_modulation
    from .profile import wave_from_json
    from .semigroup import build_kernel

    cfg = _load_config(args)
    wave = wave_from_json(Path(args.wave).read_text())
    traj = load_trajectory(args.trajectory)
    T = wave.params.period
    xs = np.unique(np.concatenate([np.linspace(-1, 1, 81) * np.pi / T * 0.999, [0.0]]))
    curve = critical_curve(wave, xs, M=cfg.bloch_modes)
    kernel = build_kernel(wave, traj.N, curve)

    def run():
        state = solve_modulation(traj, wave, kernel)
        rep = damping_report(traj, state, wave)
        out = Path(args.output or "damping.csv")
        write_damping_csv(rep, out)
        _log(f"damping certificate: K={rep.K:.4f}, C={rep.C:.4f}, "
             f"violations={rep.violations}; written to {out}")

    return _run_guarded(run)


def cmd_fit(args) -> int:
    from .experiments import fit_decay_exponent

    rows = list(csv.reader(Path(args.series).open()))
    header = rows[0]
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    col = header.index(args.column) if args.column else 1
    times, values = data[:, 0], data[:, col]
    window = (args.t_min, args.t_max if args.t_max is not None else times[-1])
    fit = fit_decay_exponent(times, values, window)
    print(json.dumps(fit.to_dict(), indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="llestab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML experiment configuration")
        sp.add_argument("--param", action="append", metavar="KEY=VALUE",
                        help="override a config entry (dotted path)")

    sp = sub.add_parser("find-wave", help="search and certify a stable wave")
    common(sp)
    sp.add_argument("--output", help="wave JSON path (default wave.json)")
    sp.set_defaults(fn=cmd_find_wave)

    sp = sub.add_parser("certify", help="certify diffusive spectral stability")
    common(sp)
    sp.add_argument("--wave", required=True, help="wave JSON file")
    sp.add_argument("--n-xi", type=int, dest="n_xi", help="Bloch grid size")
    sp.add_argument("--output", help="report JSON path")
    sp.set_defaults(fn=cmd_certify)

    sp = sub.add_parser("linear-decay", help="uniform linear decay study")
    common(sp)
    sp.add_argument("--wave", help="wave JSON (searched if omitted)")
    sp.set_defaults(fn=cmd_linear_decay)

    sp = sub.add_parser("nonlinear-decay", help="nonlinear modulation decay study")
    common(sp)
    sp.add_argument("--wave", help="wave JSON (searched if omitted)")
    sp.set_defaults(fn=cmd_nonlinear_decay)

    sp = sub.add_parser("crossover", help="algebraic-to-exponential crossover study")
    common(sp)
    sp.add_argument("--wave", help="wave JSON (searched if omitted)")
    sp.add_argument("--delta-fraction", type=float, default=0.9, dest="delta_fraction")
    sp.set_defaults(fn=cmd_crossover)

    sp = sub.add_parser("damping-report", help="energy certificate for a stored run")
    common(sp)
    sp.add_argument("--wave", required=True)
    sp.add_argument("--trajectory", required=True, help="trajectory directory")
    sp.add_argument("--output")
    sp.set_defaults(fn=cmd_damping_report)

    sp = sub.add_parser("fit", help="log-log decay fit of a CSV series")
    sp.add_argument("--series", required=True, help="CSV with a t column first")
    sp.add_argument("--column", help="column name to fit (default second column)")
    sp.add_argument("--t-min", type=float, default=2.0, dest="t_min")
    sp.add_argument("--t-max", type=float, default=None, dest="t_max")
    sp.set_defaults(fn=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        _log(f"configuration error: {type(exc).__name__}: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
