"""Command-line entry points: index, query, synth, eval, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .color_features import class_map_from_rgb
from .evaluation import run_benchmark
from .feedback import Corpus, FeedbackSet, run_iteration, start_session
from .index_store import CatalogEntry, load_index, write_index
from .service import DEFAULT_PAGE_SIZE, DEFAULT_SESSION_TIMEOUT, MAX_ITERATIONS
from .synth import generate_corpus
from .tiling import build_image_signature, build_query_signature


def _decode_file(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def cmd_index(args: argparse.Namespace) -> int:
    dataset = Path(args.dataset)
    if not dataset.is_dir():
        print(f"error: dataset directory not found: {dataset}", file=sys.stderr)
        return 2
    paths = sorted(p for p in dataset.iterdir() if p.is_file())
    signatures = []
    catalog = []
    skipped = 0
    for path in paths:
        started = time.perf_counter()
        try:
            rgb = _decode_file(path)
            class_map = class_map_from_rgb(rgb, args.colors)
            image_id = len(signatures)
            signatures.append(build_image_signature(class_map, image_id))
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            skipped += 1
            print(f"skipping {path}: {exc}", file=sys.stderr)
            continue
        catalog.append(
            CatalogEntry(
                image_id=image_id, path=str(path), width=rgb.shape[1], height=rgb.shape[0]
            )
        )
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        print(f"indexed {path} ({elapsed_ms:.1f} ms)")
    if not signatures:
        print(f"error: no decodable images in {dataset}", file=sys.stderr)
        return 2
    total = write_index(signatures, catalog, args.out)
    print(f"wrote {args.out}: {len(signatures)} images, {total} bytes, {skipped} skipped")
    return 1 if skipped else 0


def _print_page(ranking, catalog_paths, top: int) -> list[int]:
    shown = []
    for rank, entry in enumerate(ranking.top(top), start=1):
        path = catalog_paths.get(entry.image_id, "")
        print(f"{rank:4d}  id={entry.image_id:<6d} score={entry.score:.6f}  {path}")
        shown.append(entry.image_id)
    return shown


def _parse_feedback_line(line: str) -> tuple[list[int], list[int]] | None:
    """Parse "+3 -7 -9" into id lists; None means quit."""
    tokens = line.split()
    if not tokens or tokens[0].lower() in {"q", "quit", "exit", "done"}:
        return None
    positives, negatives = [], []
    for token in tokens:
        if token.startswith("+") and token[1:].isdigit():
            positives.append(int(token[1:]))
        elif token.startswith("-") and token[1:].isdigit():
            negatives.append(int(token[1:]))
        else:
            raise ValueError(f"cannot parse feedback token {token!r}; use +id or -id")
    return positives, negatives


def cmd_query(args: argparse.Namespace) -> int:
    header, catalog, signatures = load_index(args.index)
    corpus = Corpus(signatures)
    catalog_paths = {entry.image_id: entry.path for entry in catalog}
    try:
        rgb = _decode_file(Path(args.query))
        query = build_query_signature(class_map_from_rgb(rgb, header.palette_size))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    ranking, state = start_session("cli", query, corpus, args.top)
    print(f"iteration {state.iteration}")
    shown = _print_page(ranking, catalog_paths, args.top)
    if not args.interactive:
        return 0
    while state.iteration < MAX_ITERATIONS:
        try:
            line = input("feedback (+id/-id, q to quit)> ")
        except EOFError:
            break
        try:
            parsed = _parse_feedback_line(line)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            continue
        if parsed is None:
            break
        positives, negatives = parsed
        stray = [i for i in positives + negatives if i not in shown]
        if stray:
            print(
                f"error: ids not on the shown page: {sorted(set(stray))}", file=sys.stderr
            )
            continue
        try:
            feedback = FeedbackSet(positives=tuple(positives), negatives=tuple(negatives))
            ranking, state = run_iteration(state, feedback, corpus, args.top)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            continue
        print(f"iteration {state.iteration}")
        shown = _print_page(ranking, catalog_paths, args.top)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    result = generate_corpus(
        args.out,
        n_backgrounds=args.backgrounds,
        n_queries=args.queries,
        seed=args.seed,
        image_size=args.size,
    )
    sizes = [len(ids) for ids in result.answers.values()]
    mean_size = sum(sizes) / len(sizes) if sizes else 0.0
    print(
        f"wrote {len(result.image_paths)} images and {len(result.query_paths)} queries "
        f"under {args.out} (mean answer set {mean_size:.1f})"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    summary = run_benchmark(
        args.index,
        args.queries,
        args.answers,
        iterations=args.iterations,
        page_size=args.top,
        report_path=args.report,
    )
    for warning in summary["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    print(
        f"{summary['queries']} queries, {summary['iterations']} iterations, "
        f"page size {summary['page_size']}, palette {summary['palette_size']}"
    )
    if summary["mean_iterations_to_original"] is not None:
        print(f"mean iterations to original: {summary['mean_iterations_to_original']:.2f}")
        print(f"mean seconds per iteration: {summary['mean_seconds_per_iteration']:.4f}")
        for row in summary["mean_rows"]:
            print(
                f"iteration {row['iteration']}: "
                f"actual recall {row['actual_recall']:.3f}, "
                f"cumulative recall {row['cumulative_recall']:.3f}"
            )
    if args.report:
        print(f"report written to {args.report}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        args.index, page_size=args.page_size, session_timeout=args.session_timeout
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subimage", description="sub-image retrieval with relevance feedback"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="extract signatures from a directory of images")
    p_index.add_argument("--dataset", required=True, help="directory of images")
    p_index.add_argument(
        "--colors", type=int, choices=(16, 64), default=64, help="palette size"
    )
    p_index.add_argument("--out", required=True, help="output index file")
    p_index.set_defaults(func=cmd_index)

    p_query = sub.add_parser("query", help="rank an index against a query image")
    p_query.add_argument("--index", required=True, help="index file")
    p_query.add_argument("--query", required=True, help="query image file")
    p_query.add_argument("--top", type=int, default=DEFAULT_PAGE_SIZE, help="page size")
    p_query.add_argument(
        "--interactive",
        action="store_true",
        help="read +id/-id feedback lines and re-rank",
    )
    p_query.set_defaults(func=cmd_query)

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark corpus")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--backgrounds", type=int, default=500)
    p_synth.add_argument("--queries", type=int, default=20)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--size", type=int, default=128, help="image side in pixels")
    p_synth.set_defaults(func=cmd_synth)

    p_eval = sub.add_parser("eval", help="replay queries with scripted feedback")
    p_eval.add_argument("--index", required=True)
    p_eval.add_argument("--queries", required=True, help="directory of query images")
    p_eval.add_argument("--answers", required=True, help="ground-truth JSON")
    p_eval.add_argument("--iterations", type=int, default=10)
    p_eval.add_argument("--top", type=int, default=DEFAULT_PAGE_SIZE)
    p_eval.add_argument("--report", default=None, help="CSV report path")
    p_eval.set_defaults(func=cmd_eval)

    p_serve = sub.add_parser("serve", help="run the HTTP retrieval service")
    p_serve.add_argument(
        "--index", default=os.environ.get("SUBIMAGE_INDEX"), help="index file"
    )
    p_serve.add_argument(
        "--host", default=os.environ.get("SUBIMAGE_HOST", "127.0.0.1")
    )
    p_serve.add_argument(
        "--port", type=int, default=int(os.environ.get("SUBIMAGE_PORT", "8000"))
    )
    p_serve.add_argument(
        "--page-size",
        type=int,
        default=int(os.environ.get("SUBIMAGE_PAGE_SIZE", str(DEFAULT_PAGE_SIZE))),
    )
    p_serve.add_argument(
        "--session-timeout",
        type=float,
        default=float(
            os.environ.get("SUBIMAGE_SESSION_TIMEOUT", str(DEFAULT_SESSION_TIMEOUT))
        ),
    )
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve" and not args.index:
        parser.error("serve requires --index or SUBIMAGE_INDEX")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
