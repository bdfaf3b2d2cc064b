"""Retrieval metrics and the simulated-feedback benchmark.

The benchmark replays the interactive loop with a scripted user: on every
page it marks the answer-set images positive and everything else negative,
then measures how recall and precision evolve across iterations.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Sequence

import numpy as np
from PIL import Image

from .color_features import class_map_from_rgb
from .feedback import Corpus, FeedbackSet, run_iteration, start_session
from .index_store import load_index
from .tiling import QuerySignature, build_query_signature

__all__ = [
    "MetricsRow",
    "SimulationResult",
    "compute_metrics",
    "simulate_session",
    "run_benchmark",
]

CSV_COLUMNS = [
    "query",
    "iteration",
    "new_recall",
    "new_precision",
    "actual_recall",
    "actual_precision",
    "cumulative_recall",
    "cumulative_precision",
    "normalized_precision",
    "seconds",
]


@dataclass(frozen=True)
class MetricsRow:
    """Recall/precision figures for one iteration of one query session.

    The "new" pair only counts relevant images that no earlier iteration
    retrieved, so it is undefined (None) on the first iteration. The
    normalized precision is the actual precision over its attainable
    maximum, which algebraically equals the actual recall.
    """

    iteration: int
    new_recall: float | None
    new_precision: float | None
    actual_recall: float
    actual_precision: float
    cumulative_recall: float
    cumulative_precision: float
    normalized_precision: float


def compute_metrics(
    pages: Sequence[Sequence[int]], answer_set: Collection[int]
) -> list[MetricsRow]:
    """Per-iteration metrics for the pages shown during one session."""
    answers = set(answer_set)
    if not answers:
        raise ValueError("answer set must not be empty")
    if not pages:
        return []
    sizes = {len(page) for page in pages}
    if len(sizes) != 1:
        raise ValueError(f"page sizes vary across iterations: {sorted(sizes)}")
    page_size = sizes.pop()
    if page_size == 0:
        raise ValueError("pages must not be empty")

    rows: list[MetricsRow] = []
    seen_relevant: set[int] = set()
    for iteration, page in enumerate(pages, start=1):
        relevant = {i for i in page if i in answers}
        fresh = relevant - seen_relevant
        seen_relevant |= relevant
        new_recall = len(fresh) / len(answers) if iteration > 1 else None
        new_precision = len(fresh) / page_size if iteration > 1 else None
        rows.append(
            MetricsRow(
                iteration=iteration,
                new_recall=new_recall,
                new_precision=new_precision,
                actual_recall=len(relevant) / len(answers),
                actual_precision=len(relevant) / page_size,
                cumulative_recall=len(seen_relevant) / len(answers),
                cumulative_precision=len(seen_relevant) / page_size,
                # actual precision over its maximum (|answers| / pageSize),
                # which reduces to |relevant| / |answers|
                normalized_precision=len(relevant) / len(answers),
            )
        )
    return rows


@dataclass
class SimulationResult:
    rows: list[MetricsRow]
    pages: list[tuple[int, ...]]
    found_iteration: int | None  # first iteration showing the original image
    seconds: list[float]  # wall-clock per iteration


def simulate_session(
    query: QuerySignature,
    answer_set: Sequence[int],
    corpus: Corpus,
    original_id: int | None = None,
    iterations: int = 10,
    page_size: int = 20,
) -> SimulationResult:
    """Drive one scripted session: shown answers positive, the rest negative.

    original_id defaults to the first answer-set entry; found_iteration is
    None if it never reaches a shown page within the iteration budget.
    """
    answers = set(answer_set)
    if not answers:
        raise ValueError("answer set must not be empty")
    if iterations < 1:
        raise ValueError("need at least one iteration")
    target = int(answer_set[0]) if original_id is None else int(original_id)

    seconds = []
    started = time.perf_counter()
    ranking, state = start_session("benchmark", query, corpus, page_size)
    seconds.append(time.perf_counter() - started)
    pages = [tuple(e.image_id for e in ranking.top(page_size))]
    for _ in range(iterations - 1):
        shown = pages[-1]
        feedback = FeedbackSet(
            positives=tuple(i for i in shown if i in answers),
            negatives=tuple(i for i in shown if i not in answers),
        )
        started = time.perf_counter()
        ranking, state = run_iteration(state, feedback, corpus, page_size)
        seconds.append(time.perf_counter() - started)
        pages.append(tuple(e.image_id for e in ranking.top(page_size)))

    found = next((k for k, page in enumerate(pages, start=1) if target in page), None)
    return SimulationResult(
        rows=compute_metrics(pages, answers),
        pages=pages,
        found_iteration=found,
        seconds=seconds,
    )


def _mean_or_none(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return sum(present) / len(present) if present else None


def run_benchmark(
    index_path: str | Path,
    queries_dir: str | Path,
    answers_path: str | Path,
    iterations: int = 10,
    page_size: int = 20,
    report_path: str | Path | None = None,
) -> dict:
    """Replay every query against the index and write a CSV report.

    Returns a summary dict with mean metric curves, the mean number of
    iterations until each query's original image is shown (queries that
    never show it count as iterations + 1), and mean per-iteration seconds.
    Queries missing from the ground truth or from disk are reported in
    ``warnings`` and skipped.
    """
    header, catalog, signatures = load_index(index_path)
    corpus = Corpus(signatures)
    with open(answers_path, encoding="utf-8") as fh:
        answers: dict[str, list[int]] = json.load(fh)

    queries_dir = Path(queries_dir)
    on_disk = {p.name: p for p in sorted(queries_dir.iterdir()) if p.is_file()}
    warnings = []
    for name in sorted(set(on_disk) - set(answers)):
        warnings.append(f"query file {name} has no ground-truth entry; skipped")
    for name in sorted(set(answers) - set(on_disk)):
        warnings.append(f"ground-truth query {name} not found in {queries_dir}; skipped")
    runnable = sorted(set(on_disk) & set(answers))

    per_query: dict[str, SimulationResult] = {}
    for name in runnable:
        rgb = np.asarray(Image.open(on_disk[name]).convert("RGB"))
        query = build_query_signature(class_map_from_rgb(rgb, header.palette_size))
        per_query[name] = simulate_session(
            query,
            answers[name],
            corpus,
            iterations=iterations,
            page_size=page_size,
        )

    mean_rows: list[dict] = []
    for k in range(1, iterations + 1):
        rows = [res.rows[k - 1] for res in per_query.values() if len(res.rows) >= k]
        if not rows:
            break
        mean_rows.append(
            {
                "iteration": k,
                "new_recall": _mean_or_none([r.new_recall for r in rows]),
                "new_precision": _mean_or_none([r.new_precision for r in rows]),
                "actual_recall": float(np.mean([r.actual_recall for r in rows])),
                "actual_precision": float(np.mean([r.actual_precision for r in rows])),
                "cumulative_recall": float(np.mean([r.cumulative_recall for r in rows])),
                "cumulative_precision": float(np.mean([r.cumulative_precision for r in rows])),
                "normalized_precision": float(np.mean([r.normalized_precision for r in rows])),
                "seconds": float(
                    np.mean(
                        [res.seconds[k - 1] for res in per_query.values() if len(res.seconds) >= k]
                    )
                ),
            }
        )

    found = [
        res.found_iteration if res.found_iteration is not None else iterations + 1
        for res in per_query.values()
    ]
    summary = {
        "queries": len(per_query),
        "iterations": iterations,
        "page_size": page_size,
        "palette_size": header.palette_size,
        "mean_iterations_to_original": float(np.mean(found)) if found else None,
        "mean_seconds_per_iteration": (
            float(np.mean([s for res in per_query.values() for s in res.seconds]))
            if per_query
            else None
        ),
        "mean_rows": mean_rows,
        "warnings": warnings,
    }

    if report_path is not None:
        with open(report_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for name in runnable:
                res = per_query[name]
                for row, secs in zip(res.rows, res.seconds):
                    writer.writerow(
                        [
                            name,
                            row.iteration,
                            _fmt(row.new_recall),
                            _fmt(row.new_precision),
                            _fmt(row.actual_recall),
                            _fmt(row.actual_precision),
                            _fmt(row.cumulative_recall),
                            _fmt(row.cumulative_precision),
                            _fmt(row.normalized_precision),
                            f"{secs:.6f}",
                        ]
                    )
            for row in mean_rows:
                writer.writerow(
                    [
                        "MEAN",
                        row["iteration"],
                        _fmt(row["new_recall"]),
                        _fmt(row["new_precision"]),
                        _fmt(row["actual_recall"]),
                        _fmt(row["actual_precision"]),
                        _fmt(row["cumulative_recall"]),
                        _fmt(row["cumulative_precision"]),
                        _fmt(row["normalized_precision"]),
                        f"{row['seconds']:.6f}",
                    ]
                )
    return summary


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"
