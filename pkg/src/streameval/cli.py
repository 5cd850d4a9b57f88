"""Command line interface: ``python -m streameval.cli <command> ...``.

Exit codes: 0 on success, 1 for data or config errors, 2 for usage and IO
errors.
"""

from __future__ import annotations

import argparse
from dataclasses import replace
import logging
from pathlib import Path
from typing import Iterable

from .config import default_reorder_tolerance_ms, load_run_config, load_scenario, log_level
from .engine import read_labels, read_predictions, run, true_vs_observed
from .events import write_label_stream
from .label_delay import DelayConfig, join_by_id, simulate
from .stratified_iw import DEFAULT_MIN_COUNT, build_profile, save_profile
from .synth import BUILTIN_SCENARIOS, describe, generate, write_pairs

logger = logging.getLogger(__name__)


def _cmd_generate(args: argparse.Namespace) -> int:
    if args.scenario:
        config = load_scenario(args.scenario)
        overrides: dict[str, int] = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.events_per_day is not None:
            overrides["events_per_day"] = args.events_per_day
        if overrides:
            config = replace(config, **overrides)
    else:
        factory = BUILTIN_SCENARIOS[args.builtin]
        kwargs: dict[str, int] = {}
        if args.seed is not None:
            kwargs["seed"] = args.seed
        if args.events_per_day is not None:
            kwargs["events_per_day"] = args.events_per_day
        config = factory(**kwargs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.jsonl", "w", encoding="utf-8", newline="\n") as preds, open(
        out / "labels.jsonl", "w", encoding="utf-8", newline="\n"
    ) as labels:
        count = write_pairs(generate(config), preds, labels)
    print(f"wrote {count} events ({describe(config)}) to {out}")
    return 0


def _cmd_profile(args: argparse.Namespace) -> int:
    pred_path, label_path = args.reference
    tolerance = default_reorder_tolerance_ms()
    reference = join_by_id(
        read_predictions(pred_path, tolerance),
        read_labels(label_path, tolerance),
    )
    profile = build_profile(reference, args.min_count)
    save_profile(profile, args.out)
    folded = f", folded {len(profile.folded)}" if profile.folded else ""
    print(
        f"profile: {len(profile.groups)} group(s), global accuracy "
        f"{profile.global_accuracy:.4f} over {profile.total_count}{folded}"
    )
    return 0


def _cmd_delay(args: argparse.Namespace) -> int:
    config = DelayConfig(args.mean_days, args.fraction, args.seed)
    delayed = simulate(read_labels(args.labels, default_reorder_tolerance_ms()), config)
    with open(args.out, "w", encoding="utf-8", newline="\n") as sink:
        count = write_label_stream(delayed, sink)
    print(f"wrote {count} delayed label(s) to {args.out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    report = run(config)
    csv_path, meta_path = report.write(config.output)
    print(f"wrote {len(report.rows)} row(s) to {csv_path} ({meta_path.name})")
    alerts = report.metadata.get("alerts", [])
    if alerts:
        print(f"{len(alerts)} IW alert(s)")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    paired = true_vs_observed(config)
    csv_path, _ = paired.write(config.output)
    print(f"wrote {len(paired.frame)} paired row(s) to {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streameval")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic scenario")
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", help="scenario JSON file")
    source.add_argument("--builtin", choices=sorted(BUILTIN_SCENARIOS))
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--events-per-day", type=int)
    gen.set_defaults(func=_cmd_generate)

    prof = sub.add_parser("profile", help="build a subgroup accuracy profile")
    prof.add_argument(
        "--reference", nargs=2, required=True, metavar=("PREDICTIONS", "LABELS")
    )
    prof.add_argument("--min-count", type=int, default=DEFAULT_MIN_COUNT)
    prof.add_argument("--out", required=True)
    prof.set_defaults(func=_cmd_profile)

    delay = sub.add_parser("delay", help="simulate delayed, partial labels")
    delay.add_argument("--labels", required=True)
    delay.add_argument("--mean-days", type=float, default=7.0)
    delay.add_argument("--fraction", type=float, default=0.1)
    delay.add_argument("--seed", type=int, default=0)
    delay.add_argument("--out", required=True)
    delay.set_defaults(func=_cmd_delay)

    for name, func, text in (
        ("evaluate", _cmd_evaluate, "compute metric series"),
        ("compare", _cmd_compare, "true versus observed series"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True)
        cmd.set_defaults(func=func)
    return parser


def main(argv: Iterable[str] | None = None) -> int:
    """Entry point; returns the process exit code."""

    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2

    try:
        logging.basicConfig(
            level=logging.INFO if args.verbose else log_level(),
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except ValueError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}")
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}")
        return 2


__all__ = ["build_parser", "main"]


if __name__ == "__main__":  # pragma: no cover - manual invocation
    raise SystemExit(main())
