"""Operator command line: harvest, ingest, query, chat, serve, snapshot, stats.

Exit codes: 0 success, 1 usage error (bad flags), 2 runtime error
(unreachable endpoints, missing files, bad data).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import build_engine, load_settings
from .corpus import parse_corpus_line
from .errors import LitragError
from .harvest import SearchSpec, adapters_from_settings, harvest_corpus
from .rag import MemorySession, RagEngine

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for runtime."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="litrag", description="Literature RAG toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, *, corpus=False, snapshot=False, overrides=False):
        p.add_argument("--config", help="settings file (key = value lines)")
        if corpus:
            p.add_argument("--corpus", help="corpus JSONL file")
        if snapshot:
            p.add_argument("--snapshot", help="index snapshot file")
        if overrides:
            p.add_argument("--k", type=int, help="results per query")
            p.add_argument("--temperature", type=float, help="sampling temperature")
            p.add_argument("--max-tokens", type=int, dest="max_tokens", help="answer token cap")

    p = sub.add_parser("harvest", help="fetch records from sources into a corpus file")
    common(p)
    p.add_argument("--terms", required=True, help="comma-separated search terms")
    p.add_argument("--year-from", type=int, dest="year_from")
    p.add_argument("--year-to", type=int, dest="year_to")
    p.add_argument("--max", type=int, dest="max_results", default=50)
    p.add_argument("--out", required=True, help="corpus JSONL file to write")
    p.set_defaults(fn=cmd_harvest)

    p = sub.add_parser("ingest", help="ingest a corpus file into the index")
    common(p, corpus=True, snapshot=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("query", help="answer one question over the corpus")
    common(p, corpus=True, snapshot=True, overrides=True)
    p.add_argument("--q", required=True, help="the question")
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("chat", help="interactive multi-turn session on stdin")
    common(p, corpus=True, snapshot=True, overrides=True)
    p.set_defaults(fn=cmd_chat)

    p = sub.add_parser("serve", help="run the HTTP service")
    common(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("snapshot", help="ingest a corpus and write an index snapshot")
    common(p, corpus=True, snapshot=True)
    p.set_defaults(fn=cmd_snapshot)

    p = sub.add_parser("stats", help="print index statistics")
    common(p, corpus=True, snapshot=True)
    p.set_defaults(fn=cmd_stats)

    return parser


def _engine(args) -> RagEngine:
    engine = build_engine(load_settings(args.config))
    corpus = getattr(args, "corpus", None)
    snapshot = getattr(args, "snapshot", None)
    if corpus or snapshot:
        engine.restore(corpus, snapshot)
    return engine


def _ingest_lines(engine: RagEngine, path: str) -> tuple[int, int, int]:
    ingested = skipped = failed = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                doc = parse_corpus_line(line)
                if engine.has_document(doc.doc_id):
                    skipped += 1
                    continue
                engine.ingest(doc.meta, doc.text)
                ingested += 1
            except (ValueError, LitragError):
                failed += 1
    return ingested, skipped, failed


def _configs_with_overrides(engine: RagEngine, args):
    retrieval = engine.retrieval
    if getattr(args, "k", None) is not None:
        retrieval = replace(
            retrieval, k=args.k, rerank_pool=max(retrieval.rerank_pool, args.k)
        )
    generation = engine.generation
    if getattr(args, "temperature", None) is not None:
        generation = replace(generation, temperature=args.temperature)
    if getattr(args, "max_tokens", None) is not None:
        generation = replace(generation, max_new_tokens=args.max_tokens)
    return retrieval, generation


def cmd_harvest(args) -> int:
    settings = load_settings(args.config)
    spec = SearchSpec(
        terms=tuple(t.strip() for t in args.terms.split(",") if t.strip()),
        year_from=args.year_from,
        year_to=args.year_to,
        max_results=args.max_results,
    )
    counts = harvest_corpus(spec, adapters_from_settings(settings), args.out)
    for key in ("fetched", "unique", "written", "sources_failed"):
        print(f"{key}: {counts[key]}")
    return 0


def cmd_ingest(args) -> int:
    if not args.corpus:
        raise LitragError("ingest requires --corpus")
    engine = build_engine(load_settings(args.config))
    ingested, skipped, failed = _ingest_lines(engine, args.corpus)
    if args.snapshot:
        engine.save_snapshot(args.snapshot)
    print(f"ingested: {ingested}")
    print(f"skipped: {skipped}")
    print(f"failed: {failed}")
    return 0


def cmd_query(args) -> int:
    engine = _engine(args)
    retrieval, generation = _configs_with_overrides(engine, args)
    answer = engine.answer_query(args.q, None, retrieval, generation)
    print(answer.render())
    return 0


def cmd_chat(args) -> int:
    engine = _engine(args)
    retrieval, generation = _configs_with_overrides(engine, args)
    session = MemorySession()
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            print("> ", end="", flush=True)
        line = sys.stdin.readline()
        if not line:
            return 0
        question = line.strip()
        if not question:
            continue
        answer = engine.answer_query(question, session, retrieval, generation)
        print(answer.render())
        print()


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    settings = load_settings(args.config)
    engine = build_engine(settings)
    serve(engine, ServiceConfig.from_settings(settings))
    return 0


def cmd_snapshot(args) -> int:
    if not args.corpus or not args.snapshot:
        raise LitragError("snapshot requires --corpus and --snapshot")
    engine = build_engine(load_settings(args.config))
    ingested, skipped, failed = _ingest_lines(engine, args.corpus)
    engine.save_snapshot(args.snapshot)
    print(f"snapshot: {args.snapshot}")
    print(f"ingested: {ingested}")
    print(f"skipped: {skipped}")
    print(f"failed: {failed}")
    return 0


def cmd_stats(args) -> int:
    engine = _engine(args)
    stats = engine.stats()
    print(f"docs: {stats['docs']}")
    print(f"chunks: {stats['chunks']}")
    print(f"dim: {stats['dim']}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (LitragError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
