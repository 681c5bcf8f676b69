"""Command-line entry point: run trajectories, studies, and lemma checks.

Configuration is layered: explicit flags override JSON config fields,
which override the named preset's defaults.  Study and run outputs land
under --out; CSV bytes depend only on preset, method, and seed, never
on --threads.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .analysis import run_convergence_study
from .dg_space import dump_coefficients
from .noise import SeedPolicy, sample_increments
from .presets import get_preset, list_presets, make_problem
from .schemes import SchemeConfig, run_trajectory
from .verify import run_all
from . import __version__


class UsageError(Exception):
    pass


# structural fields whose values are code, not data
_PROTECTED_FIELDS = {
    "name", "dim", "domain", "initial_values", "drift_values",
    "exact_solution", "nonlinearity_name", "n_modes_rule",
}


def _load_config(preset, config_path):
    """Overlay JSON config fields onto a preset."""
    if config_path is None:
        return preset
    try:
        payload = json.loads(Path(config_path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}")
    if not isinstance(payload, dict):
        raise UsageError("config file must hold a JSON object")
    known = {f.name for f in dataclasses.fields(preset)}
    overrides = {}
    for key, value in payload.items():
        if key not in known:
            raise UsageError(f"unknown config field '{key}'")
        if key in _PROTECTED_FIELDS:
            raise UsageError(f"config field '{key}' is not overridable")
        if isinstance(value, list):
            value = tuple(value)
        overrides[key] = value
    return dataclasses.replace(preset, **overrides)


def _resolve_preset(args):
    try:
        preset = get_preset(args.preset)
    except KeyError as exc:
        raise UsageError(str(exc.args[0]))
    return _load_config(preset, args.config)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_run(args) -> int:
    preset = _resolve_preset(args)
    if preset.time_M is None or not preset.time_schedule:
        raise UsageError("preset defines no mesh size / step schedule to run")
    M = preset.time_M
    tau = preset.time_schedule[0]
    N = int(round(preset.t_f / tau))
    if N < 1 or abs(N * tau - preset.t_f) > 1e-9 * preset.t_f:
        raise UsageError(f"tau={tau} does not divide t_f={preset.t_f}")
    bundle = make_problem(preset, M)
    path = None
    if bundle.noise_spec is not None:
        path = sample_increments(bundle.noise_spec, N, preset.t_f,
                                 SeedPolicy(args.seed), 0)
    result = run_trajectory(bundle.problem, SchemeConfig(args.method, tau, N),
                            path)
    out = _out_dir(args)
    dump_coefficients(result.final, out / "state_final.bin")
    meta = {
        "preset": preset.name,
        "method": args.method,
        "seed": args.seed,
        "M": M,
        "dim": preset.dim,
        "tau": tau,
        "steps": N,
        "t_f": preset.t_f,
        "n_modes": bundle.noise_spec.n_modes if bundle.noise_spec else 0,
        "final_norm": result.final.l2_norm(),
        "version": __version__,
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True)
                                  + "\n")
    print(f"wrote {out / 'state_final.bin'} (|X_N| = {meta['final_norm']:.6g})")
    return 0


def _cmd_study(args) -> int:
    preset = _resolve_preset(args)
    report = run_convergence_study(
        preset, axis=args.axis, method=args.method, samples=args.samples,
        base_seed=args.seed, threads=args.threads)
    out = _out_dir(args)
    report.write(out / "study.csv")
    header = f"{'level':>5} {'h':>12} {'tau':>12} {'error':>13} {'order':>7}"
    print(header)
    for r in report.rows:
        order = f"{r.local_order:7.3f}" if r.local_order is not None else "      -"
        print(f"{r.level:>5} {r.h:>12.6g} {r.tau:>12.6g} {r.error:>13.6e} "
              f"{order}")
    slope = "-" if report.slope is None else f"{report.slope:.4f}"
    print(f"least-squares slope: {slope}")
    print(f"wrote {out / 'study.csv'}")
    return 0


def _cmd_verify(args) -> int:
    rows = run_all()
    print(f"{'check':<14} {'cases':>5}  {'result':<6} detail")
    for r in rows:
        result = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<14} {r.cases:>5}  {result:<6} {r.detail}")
    return 0 if all(r.passed for r in rows) else 1


def _cmd_presets(args) -> int:
    for name in list_presets():
        p = get_preset(name)
        noise = p.noise_kind or "none"
        print(f"{name:<20} dim={p.dim} t_f={p.t_f} noise={noise}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdesplit",
        description="Splitting-based dG solver for semi-linear parabolic "
                    "SPDEs: single runs, convergence studies, lemma checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", required=True,
                        help="experiment preset name (see `presets`)")
    common.add_argument("--method", choices=("dr", "lie", "euler"),
                        default="dr", help="time-stepping scheme")
    common.add_argument("--seed", type=int, default=0,
                        help="base seed for the noise streams")
    common.add_argument("--threads", type=int, default=1,
                        help="sample-parallel worker threads")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--config",
                        help="JSON file overriding preset fields")

    p_run = sub.add_parser("run", parents=[common],
                           help="single trajectory, dumps the final state")
    p_run.set_defaults(handler=_cmd_run)

    p_study = sub.add_parser("study", parents=[common],
                             help="convergence study -> CSV + JSON sidecar")
    p_study.add_argument("--axis", choices=("space", "time"), default="time",
                         help="refinement axis")
    p_study.add_argument("--samples", type=int, default=None,
                         help="Monte Carlo sample count")
    p_study.set_defaults(handler=_cmd_study)

    p_verify = sub.add_parser("verify", help="numeric lemma checks table")
    p_verify.set_defaults(handler=_cmd_verify)

    p_presets = sub.add_parser("presets", help="list available presets")
    p_presets.set_defaults(handler=_cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (None, 0) else int(exc.code)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
