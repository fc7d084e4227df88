"""Command-line entry point: one verb per module seam.

Subcommands: ``track {import,align,export}``, ``aot {build,split,stats}``,
``loss check``, ``decode {run,savings}``, ``agent {run,suite}``,
``bench {validate,gen,score}``, ``report``. Flags are long-form only; a
JSON ``--config`` file overrides flag values; ``--seed`` is mandatory
for ``agent`` and ``aot split``.

File outputs are deterministic given the seed: rerunning a subcommand
on identical inputs rewrites byte-identical files, and no subcommand
mutates its inputs. Measured wall-clock numbers appear only on stdout,
never in written reports. Failures print a machine-readable JSON object
to stderr and exit 1; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .actions import render_action, render_event
from .aot import (
    StageConfig,
    align_session,
    build_frames_aot,
    build_video_aot,
    bundled_stage3_path,
    dataset_stats,
    read_records,
    split_dataset,
    to_truncated_form,
    write_records,
)
from .arena import ArenaConfig, iter_tasks, load_task_configs
from .bench import (
    CANONICAL_COUNTS,
    Category,
    generate_synthetic,
    read_items,
    read_predictions,
    score,
    validate_dataset,
    write_items,
)
from .decoding import DecodeMode, TokenStream, decode, token_savings_report
from .errors import CombatkitError, ConfigError
from .loss import gradient_check_rows
from .runner import (
    DEFAULT_PACE_TOKENS_PER_SECOND,
    REFERENCE_LATENCIES,
    collect_transcripts,
    export_transcript,
    make_policy,
    run_episode,
    run_suite,
    write_suite_report,
)
from .tracker import export_session, import_session

__all__ = ["RunConfig", "build_parser", "main"]


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Resolved settings shared by the pipeline commands."""

    seed: int = 0
    n: int = 20
    m: int = 10
    k_frames: int = 4
    split: float = 0.95
    mode: str = DecodeMode.TRUNCATED.value
    pace_tokens_per_second: float = DEFAULT_PACE_TOKENS_PER_SECOND

    def stage_config(self, **overrides) -> StageConfig:
        kwargs = {
            "n": self.n,
            "m": self.m,
            "k_frames": self.k_frames,
            "split_fraction": self.split,
            "seed": self.seed,
        }
        kwargs.update(overrides)
        return StageConfig(**kwargs)

    @property
    def decode_mode(self) -> DecodeMode:
        return DecodeMode(self.mode)


def _run_config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig()
    kwargs = {}
    for name in ("seed", "n", "m", "k_frames", "split", "mode", "pace_tokens_per_second"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    return replace(base, **kwargs) if kwargs else base


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _fail(payload: dict) -> None:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def _require_path(p: str | Path) -> Path:
    path = Path(p)
    if not path.exists():
        raise FileNotFoundError(f"path not found: {path}")
    return path


def _csv_json_paths(out: str | Path) -> tuple[Path, Path]:
    base = Path(out)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    return base.with_suffix(".csv"), base.with_suffix(".json")


def _apply_config(args: argparse.Namespace) -> None:
    """Overlay config-file values onto parsed flags (file wins)."""
    cfg_path = getattr(args, "config", None)
    if not cfg_path:
        return
    try:
        obj = json.loads(_require_path(cfg_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{cfg_path}: not valid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{cfg_path}: top level must be a JSON object")
    for key, value in obj.items():
        dest = key.replace("-", "_")
        if dest == "in":
            dest = "in_path"
        if dest in ("func", "config") or not hasattr(args, dest):
            raise ConfigError(f"{cfg_path}: unknown setting {key!r} for this subcommand")
        setattr(args, dest, value)


# ------------------------------------------------------------------ track

def _cmd_track_import(args) -> int:
    session = import_session(_require_path(args.dir))
    _print_json(
        {
            "frames": len(session.frames),
            "events": len(session.raw_events),
            "intervals": len(session.active_intervals),
            "meta": session.meta,
        }
    )
    return 0


def _cmd_track_align(args) -> int:
    session = import_session(_require_path(args.dir))
    cfg = _run_config(args).stage_config(tap_threshold_ms=args.tap_threshold_ms)
    aligned = align_session(session, cfg)
    out = Path(args.out) if args.out else Path(args.dir) / "aligned.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for sample in aligned.alignment.samples:
            row = {
                "t_ms": sample.action_t_ms,
                "frame_index": sample.frame_index,
                "action": render_event(sample.action),
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _print_json(
        {
            "out": str(out),
            "aligned": len(aligned.alignment.samples),
            "dropped": len(aligned.alignment.dropped),
        }
    )
    return 0


def _cmd_track_export(args) -> int:
    session = import_session(_require_path(args.dir))
    out = export_session(session, args.out)
    _print_json({"out": str(out)})
    return 0


# -------------------------------------------------------------------- aot

def _cmd_aot_build(args) -> int:
    session = import_session(_require_path(args.dir))
    cfg = _run_config(args).stage_config(
        tap_threshold_ms=args.tap_threshold_ms, merge_window_ms=args.merge_window_ms
    )
    aligned = align_session(session, cfg)
    skipped = 0
    if args.stage == 1:
        records = build_video_aot(aligned, cfg)
    else:
        result = build_frames_aot(aligned, cfg)
        records = list(result.records)
        skipped = len(result.skipped)
        if args.stage == 3:
            records = [to_truncated_form(r, cfg) for r in records]
    write_records(records, args.out)
    _print_json({"out": args.out, "records": len(records), "skipped": skipped})
    return 0


def _cmd_aot_split(args) -> int:
    records = read_records(_require_path(args.in_path))
    cfg = StageConfig(split_fraction=args.split, seed=args.seed)
    train, val = split_dataset(records, cfg)
    write_records(train, args.train_out)
    write_records(val, args.val_out)
    _print_json(
        {"train": len(train), "val": len(val), "seed": args.seed, "split": args.split}
    )
    return 0


def _cmd_aot_stats(args) -> int:
    _print_json(dataset_stats(read_records(_require_path(args.in_path))))
    return 0


# ------------------------------------------------------------------- loss

_LOSS_COLUMNS = ("component", "analytic_grad_norm", "fd_grad_norm", "max_rel_error")


def _loss_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_LOSS_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row["component"],
                f"{row['analytic_grad_norm']:.6e}",
                f"{row['fd_grad_norm']:.6e}",
                f"{row['max_rel_error']:.3e}",
            ]
        )
    return buf.getvalue()


def _cmd_loss_check(args) -> int:
    rows = gradient_check_rows(seed=args.seed, points=args.points, dim=args.dim, h=args.step)
    text = _loss_csv(rows)
    sys.stdout.write(text)
    if args.out:
        csv_path, json_path = _csv_json_paths(args.out)
        csv_path.write_text(text, encoding="utf-8")
        json_path.write_text(
            json.dumps({"seed": args.seed, "rows": rows}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    worst = max(row["max_rel_error"] for row in rows)
    if worst >= args.tolerance:
        _fail(
            {
                "error": "GradientCheckFailed",
                "message": f"max relative error {worst:.3e} >= tolerance {args.tolerance:.1e}",
            }
        )
        return 1
    return 0


# ----------------------------------------------------------------- decode

def _cmd_decode_run(args) -> int:
    records = read_records(_require_path(args.in_path))
    mode = DecodeMode(args.mode)
    rows = []
    wall_total = 0.0
    for i, record in enumerate(records):
        stream = TokenStream.from_text(record.serialized, args.pace)
        result = decode(stream, mode, args.budget)
        wall_total += result.wall_ms
        rows.append(
            {
                "index": i,
                "mode": mode.value,
                "stop_reason": result.stop_reason.value,
                "emitted_tokens": result.emitted_count,
                "actions": render_action(result.actions),
            }
        )
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    _print_json(
        {
            "records": len(rows),
            "mode": mode.value,
            "mean_emitted_tokens": sum(r["emitted_tokens"] for r in rows) / len(rows),
            "mean_wall_ms": wall_total / len(rows),
        }
    )
    return 0


def _cmd_decode_savings(args) -> int:
    source = _require_path(args.in_path) if args.in_path else bundled_stage3_path()
    report = token_savings_report(source)
    payload = report.to_json_dict()
    payload["source"] = str(source)
    if args.out:
        csv_path, json_path = _csv_json_paths(args.out)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["records", "mean_full_tokens", "mean_truncated_tokens", "ratio"])
        writer.writerow(
            [
                report.records,
                f"{report.mean_full_tokens:.4f}",
                f"{report.mean_truncated_tokens:.4f}",
                f"{report.ratio:.4f}",
            ]
        )
        csv_path.write_text(buf.getvalue(), encoding="utf-8")
        json_path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    _print_json(payload)
    return 0


# ------------------------------------------------------------------ agent

def _load_tasks(selector: str):
    return iter_tasks(load_task_configs(), selector)


def _cmd_agent_run(args) -> int:
    tasks = _load_tasks(str(args.task))
    if len(tasks) != 1:
        raise ValueError(f"agent run needs exactly one task, got {len(tasks)}")
    task = tasks[0]
    cfg = ArenaConfig()
    policy = make_policy(args.policy, task, args.seed)
    report, transcript = run_episode(task, policy, DecodeMode(args.mode), args.seed, cfg)
    shown = report.to_json_dict()
    if args.out:
        out = Path(args.out)
        export_transcript(transcript, out / "session", cfg)
        written = dict(shown)
        # wall-clock is measurement noise; files stay seed-deterministic
        written.pop("mean_inference_wall_ms", None)
        written["mean_latency_ms"] = round(
            report.mean_emitted_tokens / args.pace_tokens_per_second * 1000.0, 3
        )
        (out / "report.json").write_text(
            json.dumps(written, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    _print_json(shown)
    return 0


def _cmd_agent_suite(args) -> int:
    tasks = _load_tasks(args.tasks)
    report = run_suite(
        tasks,
        mode=DecodeMode(args.mode),
        repeats=args.repeats,
        seed=args.seed,
        policy_name=args.policy,
        pace_tokens_per_second=args.pace_tokens_per_second,
    )
    if args.out:
        csv_path, _ = _csv_json_paths(args.out)
        write_suite_report(report, csv_path)
    sys.stdout.write(report.to_csv())
    return 0


# ------------------------------------------------------------------ bench

def _cmd_bench_validate(args) -> int:
    report = validate_dataset(_require_path(args.in_path))
    _print_json(report.to_json_dict())
    if not report.ok:
        _fail(
            {
                "error": "ValidationError",
                "message": f"{len(report.violations)} schema violations",
                "violations": [str(v) for v in report.violations],
            }
        )
        return 1
    return 0


def _cmd_bench_gen(args) -> int:
    tasks = _load_tasks(args.tasks)
    transcripts = collect_transcripts(
        tasks, seed=args.seed, episodes_per_task=args.episodes_per_task
    )
    targets = {
        Category.GATHERING: args.gathering,
        Category.COMPREHENSION: args.comprehension,
        Category.REASONING: args.reasoning,
    }
    items = generate_synthetic(transcripts, targets, seed=args.seed)
    write_items(items, args.out)
    _print_json(
        {
            "out": args.out,
            "items": len(items),
            "seed": args.seed,
            "counts": {c.value: targets[c] for c in targets},
        }
    )
    return 0


def _bench_csv(report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category", "correct", "total", "accuracy"])
    for name in sorted(report.per_category_total):
        writer.writerow(
            [
                name,
                report.per_category_correct[name],
                report.per_category_total[name],
                f"{report.accuracies[name]:.2f}",
            ]
        )
    writer.writerow(["macro_average", "", "", f"{report.macro_average:.2f}"])
    return buf.getvalue()


def _bench_table(report) -> str:
    lines = [f"{'category':<16}{'correct':>8}{'total':>7}{'accuracy':>10}"]
    for name in sorted(report.per_category_total):
        lines.append(
            f"{name:<16}{report.per_category_correct[name]:>8}"
            f"{report.per_category_total[name]:>7}{report.accuracies[name]:>10.2f}"
        )
    lines.append(f"{'macro_average':<16}{'':>8}{'':>7}{report.macro_average:>10.2f}")
    return "\n".join(lines) + "\n"


def _cmd_bench_score(args) -> int:
    items = read_items(_require_path(args.items))
    predictions = read_predictions(_require_path(args.predictions))
    report = score(items, predictions)
    sys.stdout.write(_bench_table(report))
    if args.out:
        csv_path, json_path = _csv_json_paths(args.out)
        csv_path.write_text(_bench_csv(report), encoding="utf-8")
        json_path.write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return 0


# ----------------------------------------------------------------- report

def _cmd_report(args) -> int:
    suite = json.loads(_require_path(args.suite).read_text(encoding="utf-8"))
    savings = (
        json.loads(_require_path(args.savings).read_text(encoding="utf-8"))
        if args.savings
        else token_savings_report(bundled_stage3_path()).to_json_dict()
    )
    bench_part = (
        json.loads(_require_path(args.bench).read_text(encoding="utf-8"))
        if args.bench
        else None
    )
    combined = {
        "suite": suite,
        "token_savings": savings,
        "benchmark": bench_part,
        "reference_latencies": list(REFERENCE_LATENCIES),
    }

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "metric", "value"])
    writer.writerow(["suite", "policy", suite.get("policy", "")])
    writer.writerow(["suite", "seed", suite.get("seed", "")])
    for row in suite.get("rows", []):
        writer.writerow(
            ["suite", f"task_{row['task_id']}_success_rate", f"{row['success_rate']:.4f}"]
        )
        writer.writerow(
            ["suite", f"task_{row['task_id']}_mean_latency_ms", f"{row['mean_latency_ms']:.3f}"]
        )
    for key in ("records", "mean_full_tokens", "mean_truncated_tokens", "ratio"):
        if key in savings:
            writer.writerow(["token_savings", key, savings[key]])
    if bench_part:
        for name, value in sorted(bench_part.get("accuracies", {}).items()):
            writer.writerow(["benchmark", f"{name}_accuracy", value])
        writer.writerow(["benchmark", "macro_average", bench_part.get("macro_average", "")])
    for ref in REFERENCE_LATENCIES:
        writer.writerow(["reference", f"{ref['system']}_latency_s", ref["latency_s"]])
        writer.writerow(["reference", f"{ref['system']}_model_calls", ref["model_calls"]])
    text = buf.getvalue()

    if args.out:
        csv_path, json_path = _csv_json_paths(args.out)
        csv_path.write_text(text, encoding="utf-8")
        json_path.write_text(
            json.dumps(combined, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    sys.stdout.write(text)
    return 0


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file whose settings override flags")

    parser = argparse.ArgumentParser(
        prog="combatkit",
        description="Combat imitation toolkit: tracking, datasets, loss checks, agents, benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    track = sub.add_parser("track", help="input tracking sessions").add_subparsers(
        dest="subcommand", required=True
    )
    p = track.add_parser("import", parents=[common], help="validate a session directory")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=_cmd_track_import)
    p = track.add_parser("align", parents=[common], help="coalesce and frame-align actions")
    p.add_argument("--dir", required=True)
    p.add_argument("--out")
    p.add_argument("--tap-threshold-ms", type=int, default=200)
    p.set_defaults(func=_cmd_track_align)
    p = track.add_parser("export", parents=[common], help="re-export in canonical form")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_track_export)

    aot_sub = sub.add_parser("aot", help="dataset construction").add_subparsers(
        dest="subcommand", required=True
    )
    p = aot_sub.add_parser("build", parents=[common], help="build stage 1/2/3 records")
    p.add_argument("--dir", required=True)
    p.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--k-frames", type=int, default=4)
    p.add_argument("--tap-threshold-ms", type=int, default=200)
    p.add_argument("--merge-window-ms", type=int, default=50)
    p.set_defaults(func=_cmd_aot_build)
    p = aot_sub.add_parser("split", parents=[common], help="seeded train/val partition")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--val-out", required=True)
    p.add_argument("--split", type=float, default=0.95)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_aot_split)
    p = aot_sub.add_parser("stats", parents=[common], help="dataset summary")
    p.add_argument("--in", dest="in_path", required=True)
    p.set_defaults(func=_cmd_aot_stats)

    loss_sub = sub.add_parser("loss", help="loss numerics").add_subparsers(
        dest="subcommand", required=True
    )
    p = loss_sub.add_parser("check", parents=[common], help="gradient check table (CSV)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_loss_check)

    dec = sub.add_parser("decode", help="streaming decode").add_subparsers(
        dest="subcommand", required=True
    )
    p = dec.add_parser("run", parents=[common], help="decode each record in a dataset")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--mode", choices=("truncated", "full"), default="truncated")
    p.add_argument("--budget", type=int, default=256)
    p.add_argument("--pace", type=float, default=None, help="tokens per second pacing")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_decode_run)
    p = dec.add_parser("savings", parents=[common], help="token savings of truncation")
    p.add_argument("--in", dest="in_path", default=None, help="default: bundled dataset")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_decode_savings)

    agent = sub.add_parser("agent", help="combat episodes").add_subparsers(
        dest="subcommand", required=True
    )
    p = agent.add_parser("run", parents=[common], help="one episode on one task")
    p.add_argument("--task", type=int, required=True)
    p.add_argument("--mode", choices=("truncated", "full"), default="truncated")
    p.add_argument("--policy", choices=("scripted", "random"), default="scripted")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--pace-tokens-per-second", type=float, default=DEFAULT_PACE_TOKENS_PER_SECOND)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_agent_run)
    p = agent.add_parser("suite", parents=[common], help="all tasks x repeats")
    p.add_argument("--tasks", default="all")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--mode", choices=("truncated", "full"), default="truncated")
    p.add_argument("--policy", choices=("scripted", "random"), default="scripted")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--pace-tokens-per-second", type=float, default=DEFAULT_PACE_TOKENS_PER_SECOND)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_agent_suite)

    bench_sub = sub.add_parser("bench", help="combat-understanding benchmark").add_subparsers(
        dest="subcommand", required=True
    )
    p = bench_sub.add_parser("validate", parents=[common], help="schema and volume check")
    p.add_argument("--in", dest="in_path", required=True)
    p.set_defaults(func=_cmd_bench_validate)
    p = bench_sub.add_parser("gen", parents=[common], help="synthesize items from episodes")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tasks", default="all")
    p.add_argument("--episodes-per-task", type=int, default=2)
    p.add_argument("--gathering", type=int, default=CANONICAL_COUNTS[Category.GATHERING])
    p.add_argument(
        "--comprehension", type=int, default=CANONICAL_COUNTS[Category.COMPREHENSION]
    )
    p.add_argument("--reasoning", type=int, default=CANONICAL_COUNTS[Category.REASONING])
    p.set_defaults(func=_cmd_bench_gen)
    p = bench_sub.add_parser("score", parents=[common], help="accuracy report")
    p.add_argument("--items", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bench_score)

    p = sub.add_parser("report", parents=[common], help="combined overview report")
    p.add_argument("--suite", required=True, help="suite report JSON")
    p.add_argument("--savings", help="savings JSON; default recomputes from bundled data")
    p.add_argument("--bench", help="benchmark score JSON")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        return args.func(args)
    except CombatkitError as exc:
        _fail({"error": type(exc).__name__, "message": str(exc)})
        return 1
    except (OSError, ValueError, KeyError) as exc:
        _fail({"error": type(exc).__name__, "message": str(exc)})
        return 1


if __name__ == "__main__":
    sys.exit(main())
