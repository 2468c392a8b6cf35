"""Desk-scale resource benchmark: hash generation, index size, query latency per k."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .indexstore import InvertedIndex, intersect, occurrence_histogram, to_bytes
from .psihash import HASH_FN_SUM, hash_corpus
from .refmodel import Document
from .similarity import rank_candidates


@dataclass(frozen=True)
class BenchReport:
    k: int
    n_docs: int
    n_hashes: int
    n_distinct: int
    gen_seconds: float
    index_bytes: int
    query_millis_median: float
    ratio_in_1: float
    ratio_in_2: float
    ratio_in_3: float

    def as_dict(self) -> dict:
        return asdict(self)


def time_queries(index: InvertedIndex, queries, repeat: int = 1) -> list[float]:
    """Wall time in ms of intersect + rank for each query hash set (self excluded)."""
    out = []
    for q in queries:
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            rank_candidates(q, intersect(q, index, exclude=q.doc_id))
            best = min(best, time.perf_counter() - t0)
        out.append(best * 1000.0)
    return out


def run(docs: Sequence[Document], k_values: Sequence[int], n_queries: int = 100, seed: int = 0,
        hash_fn_id: str = HASH_FN_SUM, threads: int | None = None) -> list[BenchReport]:
    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(len(docs), size=min(n_queries, len(docs)), replace=False).tolist())
    rows = []
    for k in k_values:
        usable = [d for d in docs if len(d.refs) >= k]
        t0 = time.perf_counter()
        sets = hash_corpus(usable, k, hash_fn_id, threads)
        index = InvertedIndex.from_hashsets(sets, k, hash_fn_id)
        gen = time.perf_counter() - t0
        size = len(to_bytes(index))
        by_id = {hs.doc_id: hs for hs in sets}
        queries = [by_id[docs[i].doc_id] for i in picks if docs[i].doc_id in by_id]
        lat = time_queries(index, queries)
        hist = occurrence_histogram(index)
        rows.append(BenchReport(
            k=k, n_docs=len(usable), n_hashes=sum(hs.n_subsets for hs in sets), n_distinct=index.n_entries,
            gen_seconds=gen, index_bytes=size, query_millis_median=statistics.median(lat) if lat else 0.0,
            ratio_in_1=float(hist.ratio_in_1), ratio_in_2=float(hist.ratio_in_2), ratio_in_3=float(hist.ratio_in_3),
        ))
    return rows


def to_text(rows: Sequence[BenchReport]) -> str:
    header = ("k", "docs", "hashes", "distinct", "gen [s]", "index bytes", "query [ms]", "ratio 1/2/3")
    body = [(str(r.k), f"{r.n_docs:,}", f"{r.n_hashes:,}", f"{r.n_distinct:,}", f"{r.gen_seconds:.2f}",
             f"{r.index_bytes:,}", f"{r.query_millis_median:.2f}",
             f"{r.ratio_in_1:.3f}/{r.ratio_in_2:.3f}/{r.ratio_in_3:.3f}") for r in rows]
    widths = [max(len(c) for c in col) for col in zip(header, *body)]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in [header, *body]) + "\n"
