"""Command-line front door: ingest/update corpora, query a snapshot, serve
the chat API, analyze usage logs and run the study statistics."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import date
from pathlib import Path

from . import index, ingest, stats, telemetry
from .gateway import BackendConfig, PriceTable, build_backend
from .service import build_service, create_app, load_service_config


def _backend_from_flags(args) -> object:
    if getattr(args, "mock_embedder", False):
        return build_backend(BackendConfig(backend="mock-echo"))
    import os

    return build_backend(
        BackendConfig(
            backend="live",
            base_url=os.environ.get("OPENAI_BASE_URL", "http://localhost:8080/v1"),
        )
    )


def _policy_from_flags(args) -> ingest.ChunkPolicy:
    return ingest.ChunkPolicy(max_chars=args.max_chars, overlap_chars=args.overlap)


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)


def _read_csv_rows(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def cmd_ingest(args) -> int:
    docs = ingest.load_corpus_dir(args.corpus)
    snapshot = ingest.ingest_corpus(docs, _policy_from_flags(args), _backend_from_flags(args))
    index.save_snapshot(snapshot, args.out)
    print(f"ingested {len(docs)} documents into {len(snapshot.chunks)} chunks -> {args.out}")
    print(f"content hash: {snapshot.content_hash}")
    return 0


def cmd_update(args) -> int:
    snapshot = index.load_snapshot(args.snapshot)
    new_docs = ingest.load_corpus_dir(args.add)
    updated = ingest.update_corpus(snapshot, new_docs, _policy_from_flags(args), _backend_from_flags(args))
    index.save_snapshot(updated, args.out)
    print(
        f"updated {len(new_docs)} documents; {len(snapshot.chunks)} -> {len(updated.chunks)} chunks -> {args.out}"
    )
    return 0


def cmd_query(args) -> int:
    snapshot = index.load_snapshot(args.snapshot)
    results, degraded = index.retrieve(snapshot, args.q, _backend_from_flags(args), k=args.k)
    if degraded:
        print("NOTE: embedding unavailable, keyword-only results", file=sys.stderr)
    if not results:
        print("no results")
        return 0
    headers = ["rank", "source", "unit", "excerpt"]
    if args.explain:
        headers = ["rank", "keyword", "vector", "fused", "source", "unit", "excerpt"]
    rows = []
    for r in results:
        excerpt = r.chunk.text[:60].replace("\n", " ")
        if args.explain:
            rows.append(
                [
                    str(r.final_rank),
                    f"{r.keyword_score:.4f}",
                    f"{r.vector_score:.4f}",
                    f"{r.fused_score:.6f}",
                    r.chunk.source_path,
                    str(r.chunk.unit_number),
                    excerpt,
                ]
            )
        else:
            rows.append([str(r.final_rank), r.chunk.source_path, str(r.chunk.unit_number), excerpt])
    print(_format_table(headers, rows))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    service_config, backend_config = load_service_config(args.config)
    if args.port:
        service_config.port = args.port
    service = build_service(service_config, backend_config, args.snapshot)
    app = create_app(service)
    uvicorn.run(app, host="0.0.0.0", port=service_config.port)
    return 0


def _parse_tz(tz: str) -> int:
    return int(tz)


def cmd_analyze_usage(args) -> int:
    log = telemetry.read_log(args.log)
    offset = _parse_tz(args.tz)
    summary = telemetry.usage_summary(log, args.cohort) if log else None
    counts = telemetry.daily_counts(log, offset)
    if summary:
        print(
            f"queries: {summary.total_queries}  sessions: {summary.total_sessions}  "
            f"queries/session: {summary.queries_per_session:.1f}  "
            f"queries/student: {summary.queries_per_student:.1f}  "
            f"span: {summary.span_days} days"
        )
    rows = [[d.isoformat(), str(n)] for d, n in counts]
    print(_format_table(["date", "queries"], rows))
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["date", "queries"])
            for d, n in counts:
                writer.writerow([d.isoformat(), n])
        print(f"wrote {args.csv}")
    return 0


def cmd_analyze_peak(args) -> int:
    log = telemetry.read_log(args.log)
    day = date.fromisoformat(args.date)
    result = telemetry.peak_share(log, day, _parse_tz(args.tz))
    print(
        f"{args.date}: {result['day_queries']} of {result['total_queries']} queries "
        f"({100 * result['share']:.1f}%)"
    )
    return 0


def cmd_analyze_cost(args) -> int:
    log = telemetry.read_log(args.log)
    prices = json.loads(Path(args.config).read_text(encoding="utf-8"))
    table = PriceTable(prices["price_in_per_1k"], prices["price_out_per_1k"])
    report = telemetry.cost_report(log, args.fixed, table)
    print(
        f"total: {report['total_cost']:.2f}  token: {report['token_cost']:.2f}\n"
        f"per query: {report['per_query_cost']:.3f}  "
        f"token per query: {report['token_per_query_cost']:.4f}"
    )
    return 0


def cmd_eval_permtest(args) -> int:
    rows = _read_csv_rows(args.csv)
    a = [float(r[args.col_a]) for r in rows]
    b = [float(r[args.col_b]) for r in rows]
    samples = stats.PairedSamples(subject_ids=list(range(len(a))), a=a, b=b)
    result = stats.paired_permutation_test(samples, seed=args.seed)
    mode = "exhaustive" if result.exhaustive else "monte-carlo"
    print(
        f"t = {result.t_statistic:.4f}  p = {result.p_value:.4f}  "
        f"({mode}, {result.n_permutations_used} permutations)"
    )
    return 0


def cmd_eval_likert(args) -> int:
    rows = _read_csv_rows(args.csv)
    values: list[int | None] = []
    for r in rows:
        raw = r[args.col].strip()
        values.append(None if raw == args.na_token else int(raw))
    result = stats.likert_stats(stats.LikertResponses(values))
    print(f"{args.col}: mean = {result['mean']:.2f}  sd = {result['sd']:.2f}  n = {result['n']}")
    return 0


def cmd_eval_compare(args) -> int:
    ours = [
        {"label": r["label"], "mean": float(r["mean"]), "sd": float(r["sd"]), "n": int(r["n"])}
        for r in _read_csv_rows(args.ours)
    ]
    theirs = [
        {"label": r["label"], "mean": float(r["mean"]), "sd": float(r["sd"]), "n": int(r["n"])}
        for r in _read_csv_rows(args.theirs)
    ]
    rows = stats.comparison_table(ours, theirs)
    table_rows = [
        [
            r["label"],
            f"{r['ours_mean']:.2f} ± {r['ours_sd']:.2f}",
            str(r["ours_n"]),
            f"{r['theirs_mean']:.2f} ± {r['theirs_sd']:.2f}",
            str(r["theirs_n"]),
            f"{r['delta_mean_pct']:+.1f}",
            f"{r['delta_sd_pct']:+.1f}",
        ]
        for r in rows
    ]
    print(
        _format_table(
            ["question", "ours", "n", "theirs", "n", "d-mean %", "d-sd %"], table_rows
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tutorkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a snapshot from a corpus directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-chars", type=int, default=2000)
    p.add_argument("--overlap", type=int, default=200)
    p.add_argument("--mock-embedder", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("update", help="replace/add documents in a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--add", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-chars", type=int, default=2000)
    p.add_argument("--overlap", type=int, default=200)
    p.add_argument("--mock-embedder", action="store_true")
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("query", help="retrieve from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mock-embedder", action="store_true")
    p.add_argument("--explain", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("serve", help="run the chat service")
    p.add_argument("--config", required=True)
    p.add_argument("--snapshot", required=True)
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    analyze = sub.add_parser("analyze", help="usage log analytics").add_subparsers(
        dest="subcommand", required=True
    )
    p = analyze.add_parser("usage")
    p.add_argument("--log", required=True)
    p.add_argument("--cohort", type=int, default=43)
    p.add_argument("--tz", default="0")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_analyze_usage)
    p = analyze.add_parser("peak")
    p.add_argument("--log", required=True)
    p.add_argument("--date", required=True)
    p.add_argument("--tz", default="0")
    p.set_defaults(func=cmd_analyze_peak)
    p = analyze.add_parser("cost")
    p.add_argument("--log", required=True)
    p.add_argument("--fixed", type=float, required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_analyze_cost)

    evals = sub.add_parser("eval", help="study statistics").add_subparsers(
        dest="subcommand", required=True
    )
    p = evals.add_parser("permtest")
    p.add_argument("--csv", required=True)
    p.add_argument("--col-a", required=True)
    p.add_argument("--col-b", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval_permtest)
    p = evals.add_parser("likert")
    p.add_argument("--csv", required=True)
    p.add_argument("--col", required=True)
    p.add_argument("--na-token", default="N/A")
    p.set_defaults(func=cmd_eval_likert)
    p = evals.add_parser("compare")
    p.add_argument("--ours", required=True)
    p.add_argument("--theirs", required=True)
    p.set_defaults(func=cmd_eval_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
