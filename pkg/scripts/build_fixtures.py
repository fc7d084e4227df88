"""Regenerate the bundled dataset and test fixtures from the real pipeline.

Everything here is seed-deterministic: rerunning the script rewrites
byte-identical files. Outputs:

  src/combatkit/data/stage3_sample.jsonl    bundled truncation-format dataset
  tests/data/bench_items.jsonl              synthetic benchmark at canonical volumes
  tests/data/bench_predictions.jsonl        predictions hitting fixed per-category counts
  tests/data/golden_session/                tiny hand-built tracking session
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from combatkit.aot import align_session, build_frames_aot, to_truncated_form, write_records
from combatkit.arena import load_task_configs
from combatkit.bench import Category, generate_synthetic, write_items, write_predictions
from combatkit.decoding import DecodeMode
from combatkit.runner import collect_transcripts, make_policy, run_episode, transcript_to_session
from combatkit.tracker import Edge, SessionRecorder, export_session

STAGE3_TASKS = (1, 6, 8, 11, 12, 13)
STAGE3_SEED = 3
BENCH_SEED = 0
CORRECT = {Category.GATHERING: 219, Category.COMPREHENSION: 123, Category.REASONING: 244}
WRONG_CHOICE = {"A": "B", "B": "C", "C": "A"}


def build_stage3(out: Path) -> None:
    tasks = load_task_configs()
    records = []
    for task_id in STAGE3_TASKS:
        task = tasks[task_id]
        policy = make_policy("scripted", task, STAGE3_SEED)
        _, transcript = run_episode(task, policy, DecodeMode.TRUNCATED, STAGE3_SEED)
        session = transcript_to_session(transcript)
        aligned = align_session(session)
        result = build_frames_aot(aligned)
        records.extend(to_truncated_form(r) for r in result.records)
    write_records(records, out)
    print(f"stage3: {len(records)} records -> {out}")


def build_bench(items_out: Path, predictions_out: Path) -> None:
    tasks = load_task_configs()
    transcripts = collect_transcripts(
        list(tasks.values()), seed=BENCH_SEED, episodes_per_task=2
    )
    items = generate_synthetic(transcripts, seed=BENCH_SEED)
    write_items(items, items_out)
    predictions: dict[str, str] = {}
    answered = {c: 0 for c in CORRECT}
    for item in items:
        right = answered[item.category] < CORRECT[item.category]
        answered[item.category] += 1
        if right:
            predictions[item.item_id] = item.gold
        elif item.category is Category.REASONING:
            predictions[item.item_id] = WRONG_CHOICE[item.gold]
        else:
            predictions[item.item_id] = "No" if item.gold == "Yes" else "Yes"
    write_predictions(predictions, predictions_out)
    print(f"bench: {len(items)} items -> {items_out}")


def build_golden_session(out_dir: Path) -> None:
    rec = SessionRecorder(meta={"epoch_ms": "0", "game_mode": "BMW"})
    for t in (0, 100, 200, 300, 400, 500, 600, 700):
        rec.add_frame(t, {"note": f"frame at {t} ms"})
    rec.add_event("keyboard", "space", Edge.DOWN, 40)
    rec.add_event("keyboard", "space", Edge.UP, 90)
    rec.add_event("keyboard", "w", Edge.DOWN, 120)
    rec.add_event("keyboard", "w", Edge.UP, 620)
    rec.add_interval(0, 700)
    export_session(rec.freeze(), out_dir)
    print(f"golden session -> {out_dir}")


def main() -> None:
    build_stage3(ROOT / "src" / "combatkit" / "data" / "stage3_sample.jsonl")
    build_bench(
        ROOT / "tests" / "data" / "bench_items.jsonl",
        ROOT / "tests" / "data" / "bench_predictions.jsonl",
    )
    build_golden_session(ROOT / "tests" / "data" / "golden_session")


if __name__ == "__main__":
    main()
