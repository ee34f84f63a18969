"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 configuration problem.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional, Sequence

from .dialogue import ConfigurationError
from .hesitation import CalibrationError, CalibrationTable, clamp_bounds

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--sessions", type=int, help="sessions per condition")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--provider", choices=("rule", "external"), help="perception/response provider")
    p.add_argument("--calibration", help="calibration table JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hesitator", description="Simulate shoppers who hesitate under choice overload.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run sessions and write transcripts")
    _common(sim)

    exp = sub.add_parser("experiment", help="run an experiment and write CSV/SVG")
    exp.add_argument("kind", choices=("overload", "curves", "ablation"))
    exp.add_argument("--curve", help="total_info, attributes or assortment")
    _common(exp)

    val = sub.add_parser("validate-calibration", help="check a calibration table")
    val.add_argument("table")

    ins = sub.add_parser("inspect", help="summarize a transcript file")
    ins.add_argument("transcript")
    return parser


def _load_config(args):
    from .config import RunConfig

    overrides = {
        "base_seed": args.seed,
        "sessions": args.sessions,
        "out": args.out,
        "workers": args.workers,
        "provider": args.provider,
        "calibration": args.calibration,
    }
    cfg = RunConfig.load(args.config, overrides)
    if cfg["provider"] == "external":
        from .external import ENDPOINT_VAR

        if not os.environ.get(ENDPOINT_VAR):
            raise ConfigurationError(
                f"--provider external needs {ENDPOINT_VAR} set to a JSON completion endpoint "
                "(and HESITATOR_LLM_KEY if it requires a key)"
            )
    return cfg


def _outdir(cfg) -> str:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "effective_config.json"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())
    return out


def _write(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def cmd_simulate(args) -> int:
    from .experiments import Runner, _providers_for, session_seeds, simulate_cell

    cfg = _load_config(args)
    env = cfg.environment()
    cell = cfg.cell()
    runner = Runner(env, 1)
    runner.check(cell)
    providers = _providers_for(env, runner.catalog)
    out = _outdir(cfg)
    tdir = os.path.join(out, "transcripts")
    os.makedirs(tdir, exist_ok=True)
    purchases, turns, aborted = 0, 0, 0
    n = cfg["sessions"]
    for i in range(n):
        result = simulate_cell(env, runner.catalog, providers, cell, cfg["base_seed"], i)
        _write(os.path.join(tdir, f"session_{i:04d}.jsonl"), result.transcript(detail=True).encode("utf-8"))
        if result.status != "ok":
            aborted += 1
            print(f"session {i} aborted: {result.diagnostic}", file=sys.stderr)
        purchases += result.purchased
        turns += result.terminal_turn
    summary = {
        "sessions": n,
        "purchases": purchases,
        "success_rate": purchases / n,
        "mean_turns": turns / n,
        "aborted": aborted,
        "profile_seeds": [session_seeds(cfg["base_seed"], i)[0] for i in range(n)],
    }
    _write(os.path.join(out, "summary.json"), (json.dumps(summary, indent=2) + "\n").encode("utf-8"))
    print(f"sessions={n} success_rate={summary['success_rate']:.4f} mean_turns={summary['mean_turns']:.2f}")
    return EXIT_RUNTIME if aborted else EXIT_OK


def cmd_experiment(args) -> int:
    from .experiments import (
        Runner,
        export_results,
        run_ablation,
        run_overload_experiment,
        run_sweep,
        sign_changes,
    )

    cfg = _load_config(args)
    if args.curve is not None and args.curve not in ("total_info", "attributes", "assortment"):
        raise ConfigurationError(f"unknown curve {args.curve!r}; choose total_info, attributes or assortment")
    runner = Runner(cfg.environment(), cfg["workers"])
    out = _outdir(cfg)
    n, seed = cfg["sessions"], cfg["base_seed"]
    if args.kind == "overload":
        result = run_overload_experiment(cfg.conditions(), n, seed, runner=runner)
        _write(os.path.join(out, "overload.csv"), export_results(result, "csv"))
        _write(os.path.join(out, "overload.svg"), export_results(result, "svg"))
        print("condition  n    sr")
        for c in result.conditions:
            print(f"{c.name:<10} {c.n:<4} {c.sr:.4f}")
        if result.test is not None:
            a, b = result.test_pair
            print(f"wilcoxon {a} vs {b}: W+={result.test.statistic:g} p={result.test.p_value:.4g} ({result.test.method})")
        else:
            print(result.diagnostic)
        return EXIT_OK
    if args.kind == "curves":
        spec = cfg.sweep(args.curve)
        result = run_sweep(spec, n, seed, runner=runner)
        stem = f"curve_{spec.curve}"
        _write(os.path.join(out, stem + ".csv"), export_results(result, "csv"))
        _write(os.path.join(out, stem + ".svg"), export_results(result, "svg"))
        for u in spec.uncertainties:
            xs, ys = result.series(u)
            print(f"uncertainty={u}: " + "  ".join(f"{x}:{y:.3f}" for x, y in zip(xs, ys)))
        return EXIT_OK
    spec = cfg.sweep(args.curve or "attributes")
    for variant in ("structured_selection", "flat_rating"):
        result = run_ablation(variant, spec, n, seed, runner=runner)
        stem = f"ablation_{variant}"
        _write(os.path.join(out, stem + ".csv"), export_results(result, "csv"))
        _write(os.path.join(out, stem + ".svg"), export_results(result, "svg"))
        for u in spec.uncertainties:
            xs, ys = result.series(u)
            print(f"{variant} uncertainty={u}: " + "  ".join(f"{y:.3f}" for y in ys) + f"  sign changes={sign_changes(ys)}")
    return EXIT_OK


def cmd_validate_calibration(args) -> int:
    try:
        with open(args.table, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"cannot read {args.table}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        table = CalibrationTable.from_json(text, validate=False)
    except CalibrationError as exc:
        print(f"invalid calibration table: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for k in "astu":
        f = table.factor(k)
        print(f"factor {k}: beta={f.beta:g} delta=[{f.delta_min:g}, {f.delta_max:g}]")
    bad = table.invalid_factors()
    if bad:
        print(f"invalid: delta_min > delta_max for factor(s) {', '.join(bad)}", file=sys.stderr)
        return EXIT_CONFIG
    lo, hi = table.attainable_range()
    c_lo, c_hi = clamp_bounds(0.5)
    print(f"attainable d_total range: [{lo:.4f}, {hi:.4f}]")
    print(f"clamp interval at p_base=0.5: [{c_lo:.4f}, {c_hi:.4f}] (pi/2 = {math.pi / 2:.4f})")
    print("ok")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .state import read_transcript

    try:
        with open(args.transcript, encoding="utf-8") as fh:
            records = read_transcript(fh.read())
    except OSError as exc:
        print(f"cannot read {args.transcript}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"{args.transcript}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("turn  outcome  action                 p_accept  d_total  items")
    for r in records:
        p = "-" if r["p_accept"] is None else f"{r['p_accept']:.4f}"
        d = "-" if r["d_total"] is None else f"{r['d_total']:+.4f}"
        print(f"{r['turn']:<5} {r['outcome']:<8} {r['user_action']:<22} {p:<9} {d:<8} {','.join(r['sales_items'])}")
    final = records[-1]["outcome"] if records else None
    print(f"turns={len(records)} purchased={'yes' if final == 'accept' else 'no'}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "validate-calibration": cmd_validate_calibration,
    "inspect": cmd_inspect,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, CalibrationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
