"""Command-line interface.

Subcommands cover test-bed generation, the individual averaging and
variation operations on stored files, and the experiment suite.  Exit codes:
0 on success with all asserted inequalities passing, 2 when any asserted
inequality fails, 1 on usage errors.  With a fixed seed the emitted CSV is
byte-identical across runs (suppress the timestamp header line with
--no-timestamp to diff outputs).
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..analytic import make_phi, make_theta, smooth_average, box_average
from ..core import (
    load_grid,
    load_system,
    load_tuple,
    store_grid,
    store_system,
    store_tuple,
)
from ..ergodic import AverageSequence, cubic_average, load_sequence, store_sequence
from ..errors import ConfigError, CubevarError
from ..forms import evaluate_lambda, load_kernel, symbol_decay_check
from ..variation import count_eps_jumps, rho_variation, variation_csv_rows
from .config import EXPERIMENTS, config_from_pairs, read_config_file, standard_config
from .experiments import ExperimentReport, run_experiment
from .generators import random_system, random_tuple_spec, rng_for


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cubevar", description=__doc__)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--no-timestamp", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-system", help="generate a random finite system")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--kind", choices=("rotation", "permutation"), default="rotation")
    p.add_argument("--nonuniform", action="store_true")

    p = sub.add_parser("gen-funcs", help="generate a random function tuple")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--kind", choices=("smooth", "steps", "mixed"), default="mixed")
    p.add_argument("--stem", default="tuple")

    p = sub.add_parser("avg", help="cube averages of a system tuple")
    p.add_argument("--system", type=Path, required=True)
    p.add_argument("--funcs", type=Path, required=True)
    p.add_argument("--n-max", type=int, default=8)
    p.add_argument("--stem", default="avg")

    p = sub.add_parser("box-avg", help="sharp-profile entangled average")
    p.add_argument("--funcs", type=Path, required=True)
    p.add_argument("--r", type=float, required=True)

    p = sub.add_parser("smooth-avg", help="mollified-profile entangled average")
    p.add_argument("--funcs", type=Path, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--resolution", type=int, default=32)

    p = sub.add_parser("variation", help="rho-variation of a stored sequence")
    p.add_argument("--seq", type=Path, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--p", type=float, default=2.0)

    p = sub.add_parser("jumps", help="count eps-jumps of a stored sequence")
    p.add_argument("--seq", type=Path, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--p", type=float, default=2.0)

    p = sub.add_parser("lambda", help="entangled multilinear functional")
    p.add_argument("--kernel", type=Path, required=True)
    p.add_argument("--funcs", type=Path, required=True)
    p.add_argument("--f0", type=Path, required=True)

    p = sub.add_parser("symbol-check", help="Fourier symbol decay diagnostic")
    p.add_argument("--kernel", type=Path, required=True)
    p.add_argument("--max-order", type=int, default=2)

    p = sub.add_parser("verify", help="run one experiment of the suite")
    p.add_argument("experiment")
    for flag, typ in [
        ("--d", int), ("--grid", int), ("--resolution", int), ("--trials", int),
        ("--n-max", int), ("--rho", float), ("--p", float), ("--delta", float),
        ("--r", float), ("--system-size", int), ("--partition", int),
        ("--r-quad", int), ("--subdivide", int),
    ]:
        p.add_argument(flag, type=typ, default=None)
    p.add_argument("--kind", choices=("smooth", "steps", "mixed"), default=None)

    sub.add_parser("sweep", help="run the whole experiment suite")
    return parser


def _timestamp_line() -> str:
    return "# generated " + datetime.now(timezone.utc).isoformat()


def _emit(lines: list[str], out: Path | None, timestamp: bool) -> None:
    if timestamp:
        lines = [_timestamp_line()] + lines
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _emit_report(report: ExperimentReport, args) -> None:
    if args.format == "json":
        text = json.dumps(report.json_payload(), sort_keys=True, indent=1)
        if args.out is None:
            sys.stdout.write(text + "\n")
        else:
            args.out.parent.mkdir(parents=True, exist_ok=True)
            args.out.write_text(text + "\n")
    else:
        _emit(report.csv_lines(), args.out, not args.no_timestamp)


def _verify_config(args):
    overrides: dict[str, str] = {}
    if args.config is not None:
        overrides.update(read_config_file(args.config))
    mapping = {
        "d": args.d, "grid": args.grid, "resolution": args.resolution,
        "trials": args.trials, "n_max": args.n_max, "rho": args.rho,
        "p": args.p, "system_size": args.system_size,
        "partition": args.partition, "r_quad": args.r_quad,
        "subdivide": args.subdivide, "kind": args.kind,
    }
    for key, val in mapping.items():
        if val is not None:
            overrides[key] = str(val)
    if args.delta is not None:
        overrides["delta"] = str(args.delta)
        overrides["delta_values"] = str(args.delta)
    if args.r is not None:
        overrides["r_values"] = str(args.r)
    overrides["seed"] = str(args.seed)
    overrides["experiment"] = args.experiment
    pairs = {k: v for k, v in overrides.items()}
    base = standard_config(args.experiment)
    merged = {
        "experiment": args.experiment,
        **{k: _render(getattr(base, k)) for k in _CONFIG_ECHO_KEYS},
    }
    merged.update(pairs)
    return config_from_pairs(merged)


_CONFIG_ECHO_KEYS = (
    "d", "grid", "resolution", "delta", "delta_values", "r_values", "rho",
    "p", "trials", "n_max", "scales", "j_set", "partition", "r_quad",
    "eps_values", "pair_starts", "kind", "system_size", "system_kind",
    "subdivide", "normalize", "sign_trials", "seed",
)


def _render(value) -> str:
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value)
    return str(value)


def _cmd_gen_system(args) -> int:
    sysm = random_system(
        rng_for(args.seed, 0), args.d, args.size, args.kind, args.nonuniform
    )
    out = args.out or Path("system.txt")
    store_system(sysm, out)
    print(f"wrote system of size {sysm.size} to {out}")
    return 0


def _cmd_gen_funcs(args) -> int:
    if args.grid % args.resolution:
        raise UsageError("grid must be a multiple of resolution")
    spec = random_tuple_spec(
        rng_for(args.seed, 0), args.d, args.grid // args.resolution, args.kind
    )
    F = spec.sample(args.resolution)
    directory = args.out or Path("funcs")
    manifest = store_tuple(F, directory, args.stem)
    print(f"wrote tuple manifest {manifest}")
    return 0


def _cmd_avg(args) -> int:
    sysm = load_system(args.system)
    f = load_tuple(args.funcs)
    frames = [cubic_average(sysm, f, n) for n in range(1, args.n_max + 1)]
    seq = AverageSequence(
        list(range(1, args.n_max + 1)), frames, weights=sysm.weights
    )
    directory = args.out or Path("averages")
    manifest = store_sequence(seq, directory, args.stem)
    print(f"wrote sequence manifest {manifest}")
    return 0


def _cmd_box_avg(args) -> int:
    F = load_tuple(args.funcs)
    if args.r <= 0:
        raise UsageError("r must be positive")
    out = args.out or Path("box_avg.grid")
    store_grid(box_average(F, args.r), out)
    print(f"wrote {out}")
    return 0


def _cmd_smooth_avg(args) -> int:
    F = load_tuple(args.funcs)
    if args.r <= 0:
        raise UsageError("r must be positive")
    phi = make_phi(args.delta, args.resolution)
    out = args.out or Path("smooth_avg.grid")
    store_grid(smooth_average(F, phi, args.r), out)
    print(f"wrote {out}")
    return 0


def _cmd_variation(args) -> int:
    if args.rho < 1:
        raise UsageError(f"rho must be >= 1, got {args.rho}")
    if args.p < 1:
        raise UsageError(f"p must be >= 1, got {args.p}")
    seq = load_sequence(args.seq)
    result = rho_variation(seq, args.rho, args.p)
    _emit(variation_csv_rows([result]), args.out, not args.no_timestamp)
    return 0


def _cmd_jumps(args) -> int:
    if args.eps <= 0:
        raise UsageError("eps must be positive")
    seq = load_sequence(args.seq)
    jc = count_eps_jumps(seq, args.eps, args.p)
    pairs = ";".join(f"{m}:{n}" for m, n in jc.pairs)
    _emit(
        ["eps,p,count,pairs", f"{jc.eps!r},{jc.p!r},{jc.count},{pairs}"],
        args.out,
        not args.no_timestamp,
    )
    return 0


def _cmd_lambda(args) -> int:
    kernel = load_kernel(args.kernel)
    F = load_tuple(args.funcs)
    f0 = load_grid(args.f0)
    value = evaluate_lambda(kernel, F, f0)
    _emit(["lambda", repr(value)], args.out, not args.no_timestamp)
    return 0


def _cmd_symbol_check(args) -> int:
    kernel = load_kernel(args.kernel)
    report = symbol_decay_check(kernel, args.max_order)
    _emit(report.csv_lines(), args.out, not args.no_timestamp)
    return 0


def _cmd_verify(args) -> int:
    if args.experiment not in EXPERIMENTS:
        raise UsageError(
            f"unknown experiment {args.experiment!r}; choose from {EXPERIMENTS}"
        )
    try:
        cfg = _verify_config(args)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    report = run_experiment(cfg)
    _emit_report(report, args)
    failed = sum(1 for r in report.rows if not r.passed)
    print(
        f"{cfg.experiment}: {len(report.rows)} rows, {failed} failed",
        file=sys.stderr,
    )
    return 0 if report.all_passed else 2


def _cmd_sweep(args) -> int:
    out_dir = args.out or Path("sweep")
    out_dir.mkdir(parents=True, exist_ok=True)
    worst = 0
    for experiment in EXPERIMENTS:
        cfg = standard_config(experiment, seed=args.seed)
        report = run_experiment(cfg)
        path = out_dir / f"{experiment.lower()}.{args.format}"
        if args.format == "json":
            path.write_text(
                json.dumps(report.json_payload(), sort_keys=True, indent=1) + "\n"
            )
        else:
            lines = report.csv_lines()
            if not args.no_timestamp:
                lines = [_timestamp_line()] + lines
            path.write_text("\n".join(lines) + "\n")
        status = "pass" if report.all_passed else "FAIL"
        print(f"{experiment}: {len(report.rows)} rows -> {path} [{status}]")
        if not report.all_passed:
            worst = 2
    return worst


_COMMANDS = {
    "gen-system": _cmd_gen_system,
    "gen-funcs": _cmd_gen_funcs,
    "avg": _cmd_avg,
    "box-avg": _cmd_box_avg,
    "smooth-avg": _cmd_smooth_avg,
    "variation": _cmd_variation,
    "jumps": _cmd_jumps,
    "lambda": _cmd_lambda,
    "symbol-check": _cmd_symbol_check,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except CubevarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
