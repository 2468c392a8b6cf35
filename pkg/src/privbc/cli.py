"""Command-line entry point: ``privbc <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import attackcost, bench, indexstore, synth
from .errors import PBCError
from .ingest import CorpusStats, convert_tei, load_corpus, parse_document, tei_paths, write_corpus, write_records
from .psihash import HASH_FN_SUM, HASH_FUNCTIONS, count_collisions, hash_document, read_hashset, write_hashset
from .refmodel import DEFAULT_MAX_REFS, Corpus
from .similarity import rank_candidates, report_lines

log = logging.getLogger("privbc")


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


def _emit(obj, as_json: bool, text: str) -> None:
    if as_json:
        print(json.dumps(obj, sort_keys=True))
    else:
        print(text)


def _load(args) -> tuple[Corpus, CorpusStats]:
    corpus, stats = load_corpus(args.corpus, args.k, args.max_refs)
    log.info("loaded %d documents (%d excluded, %d unique references)",
             stats.n_docs_loaded, stats.n_docs_excluded, stats.n_unique_refs)
    return corpus, stats


def cmd_gen(args) -> int:
    sc = synth.generate(n_docs=args.n_docs, refs_min=args.refs[0], refs_max=args.refs[1], pool_size=args.pool,
                        n_planted=args.planted, overlap=args.overlap, skew=args.skew, seed=args.seed)
    sc.write(args.out, args.truth)
    log.info("wrote %d documents, %d planted pairs", len(sc.records), len(sc.planted))
    return 0


def cmd_ingest(args) -> int:
    src = Path(args.input)
    if not src.exists():
        raise FileNotFoundError(f"no such file or directory: {src}")
    if args.format == "tei":
        result = convert_tei(tei_paths(src))
        tmp = Path(args.out)
        write_records(result.records, tmp)
        log.info("TEI: %d documents, %d untitled entries skipped", len(result.records), result.skipped_untitled)
        corpus, stats = load_corpus(tmp, args.k, args.max_refs)
    else:
        corpus, stats = load_corpus(src, args.k, args.max_refs)
    write_corpus(corpus, args.out)
    _emit(stats.as_dict(), args.json,
          f"loaded {stats.n_docs_loaded}  excluded {stats.n_docs_excluded}  unique refs {stats.n_unique_refs}")
    return 0


def cmd_build(args) -> int:
    corpus, _ = _load(args)
    index = indexstore.build_index(corpus, args.k, args.hash_fn, args.threads)
    if index.n_entries == 0:
        log.warning("index is empty: no document has at least k=%d references", args.k)
    n_bytes = indexstore.persist(index, args.out)
    info = indexstore.stats(index, n_bytes)
    _emit(info, args.json, indexstore.stats_text(info))
    return 0


def cmd_stats(args) -> int:
    index = indexstore.load(args.index)
    info = indexstore.stats(index, Path(args.index).stat().st_size)
    _emit(info, args.json, indexstore.stats_text(info))
    return 0


def cmd_hash(args) -> int:
    corpus, _ = _load(args)
    doc = corpus.get(args.doc_id)
    if doc is None:
        raise KeyError(f"document {args.doc_id!r} not in corpus (or not eligible)")
    hs = hash_document(doc, args.k, args.hash_fn)
    write_hashset(hs, args.out, args.format)
    log.info("%s: %d subset hashes written to %s", doc.doc_id, len(hs), args.out)
    return 0


def cmd_query(args) -> int:
    index = indexstore.load(args.index)
    queries = []
    if args.hashes:
        for path in args.hashes:
            queries.append(read_hashset(path, k=index.k, hash_fn_id=index.hash_fn_id))
    if args.corpus:
        corpus, _ = load_corpus(args.corpus, index.k, args.max_refs)
        wanted = args.doc_id or [d.doc_id for d in corpus.documents]
        by_id = {d.doc_id: d for d in corpus.documents}
        for doc_id in wanted:
            if doc_id not in by_id:
                raise KeyError(f"document {doc_id!r} not in corpus (or not eligible)")
            queries.append(hash_document(by_id[doc_id], index.k, index.hash_fn_id))
    if not queries:
        raise ValueError("nothing to query: pass --corpus/--doc-id or --hashes")
    exclusive = args.mode == "pair-exclusive"
    for q in queries:
        counts = indexstore.intersect(q, index, exclude=None if args.include_self and not exclusive else q.doc_id,
                                      exclusive=exclusive)
        results = rank_candidates(q, counts)
        if args.top:
            results = results[:args.top]
        for line in report_lines(results, args.mode):
            print(line)
    return 0


def cmd_bench(args) -> int:
    corpus, _ = load_corpus(args.corpus, min(args.k), args.max_refs)
    rows = bench.run(corpus.documents, args.k, n_queries=args.queries, seed=args.seed,
                     hash_fn_id=args.hash_fn, threads=args.threads)
    _emit([r.as_dict() for r in rows], args.json, bench.to_text(rows).rstrip("\n"))
    return 0


def cmd_serve(args) -> int:
    from .service import DetectionService, serve

    service = DetectionService(args.k, args.hash_fn, args.index)
    serve(service, args.host, args.port)
    return 0


def cmd_attack(args) -> int:
    if args.dblp_preset:
        rows = attackcost.dblp_preset(args.per_hash)
    else:
        rows = attackcost.sweep(args.k, args.n, args.per_hash)
    extra = {}
    if args.budget_hours is not None:
        extra = {f"min_universe_k{k}": attackcost.min_universe_for_budget(k, args.per_hash, args.budget_hours * 3600)
                 for k in (args.k if not args.dblp_preset else (1, 2, 3))}
    if args.format == "csv":
        sys.stdout.write(attackcost.to_csv(rows))
    elif args.format == "json" or args.json:
        out = [{"n_refs": r.n_refs, "k": r.k, "per_hash_seconds": r.per_hash_seconds, "n_hashes": r.n_hashes,
                "runtime_seconds": r.runtime_seconds, "runtime_human": r.runtime_human} for r in rows]
        print(json.dumps({"estimates": out, **extra}, sort_keys=True))
        return 0
    else:
        sys.stdout.write(attackcost.to_text(rows))
    for key, value in extra.items():
        print(f"{key}: {value}")
    return 0


def cmd_collisions(args) -> int:
    if args.corpus:
        corpus = load_corpus(args.corpus, args.k, args.max_refs)[0].documents
    else:
        corpus = [parse_document(r) for r in synth.collision_fixture(args.seed).records]
    from .psihash import distinct_subsets

    n_subsets = len(distinct_subsets(corpus, args.k)[1])
    found = count_collisions(corpus, args.k, args.width)
    _emit({"k": args.k, "width": args.width, "distinct_subsets": n_subsets, "collisions": found}, args.json,
          f"k={args.k} width={args.width} distinct subsets {n_subsets:,} collisions {found}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--max-refs", type=int, default=DEFAULT_MAX_REFS)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--hash-fn", default=HASH_FN_SUM, choices=HASH_FUNCTIONS)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="privbc", description="Private bibliographic coupling over hashed reference subsets.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", parents=[common], help="write a seeded synthetic corpus")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--truth", help="JSON file listing planted pairs")
    s.add_argument("--n-docs", type=int, default=1000)
    s.add_argument("--refs", type=_range, default=(10, 50), help="refs per document, MIN:MAX")
    s.add_argument("--pool", type=int, default=20_000)
    s.add_argument("--planted", type=int, default=10)
    s.add_argument("--overlap", type=_range, default=(5, 10), help="shared refs per planted pair, MIN:MAX")
    s.add_argument("--skew", type=float, default=0.5, help="power-law exponent of reference popularity")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("ingest", parents=[common], help="normalize, deduplicate and filter a corpus")
    s.add_argument("--k", type=int, default=2, help="subset size (default 2)")
    s.add_argument("input", help="line-format file, or TEI file/directory with --format tei")
    s.add_argument("--format", choices=("jsonl", "tei"), default="jsonl")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("build", parents=[common], help="hash a corpus and write an index")
    s.add_argument("--k", type=int, default=2, help="subset size (default 2)")
    s.add_argument("corpus")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("stats", parents=[common], help="print index statistics")
    s.add_argument("index")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("hash", parents=[common], help="export one document's subset hashes")
    s.add_argument("--k", type=int, default=2, help="subset size (default 2)")
    s.add_argument("corpus")
    s.add_argument("--doc-id", required=True)
    s.add_argument("--format", choices=("binary", "hex"), default="binary")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_hash)

    s = sub.add_parser("query", parents=[common], help="rank indexed documents against query documents")
    s.add_argument("index")
    s.add_argument("--corpus", help="corpus holding the query documents")
    s.add_argument("--doc-id", action="append", help="query document id (repeatable; default: all)")
    s.add_argument("--hashes", action="append", help="exported hash-set file (repeatable)")
    s.add_argument("--mode", choices=("raw", "pair-exclusive"), default="raw")
    s.add_argument("--top", type=int, default=0, help="keep only the first N candidates per query")
    s.add_argument("--include-self", action="store_true", help="keep the query's own index entry")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("bench", parents=[common], help="hash/index/query benchmark per k")
    s.add_argument("corpus")
    s.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    s.add_argument("--queries", type=int, default=100)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("serve", parents=[common], help="run the hash-only detection service")
    s.add_argument("--k", type=int, default=2, help="subset size (default 2)")
    s.add_argument("--host", default=os.environ.get("PRIVBC_HOST", "127.0.0.1"))
    s.add_argument("--port", type=int, default=int(os.environ.get("PRIVBC_PORT", "8750")))
    s.add_argument("--index", default=os.environ.get("PRIVBC_INDEX"), help="index file, loaded and kept updated")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("attack", parents=[common], help="preimage attack cost estimates")
    s.add_argument("--n", type=int, nargs="+", default=[attackcost.DBLP_RECORDS], help="reference universe sizes")
    s.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    s.add_argument("--per-hash", type=float, default=0.001, help="seconds per hash (default 0.001)")
    s.add_argument("--budget-hours", type=float, help="also report the smallest universe exceeding this budget")
    s.add_argument("--dblp-preset", action="store_true", help="n = 5.05 million, k = 1, 2, 3")
    s.add_argument("--format", choices=("text", "csv", "json"), default="text")
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("collisions", parents=[common], help="count combined-hash collisions at 32 or 160 bits")
    s.add_argument("corpus", nargs="?", help="corpus file (default: built-in birthday fixture)")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--width", type=int, choices=(32, 160), default=160)
    s.set_defaults(func=cmd_collisions)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream reader (e.g. head) went away; silence the flush at exit too
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except (PBCError, OSError, KeyError, ValueError) as exc:
        print(f"privbc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
