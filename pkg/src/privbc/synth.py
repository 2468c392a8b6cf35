"""Seeded synthetic corpora with planted source/suspect pairs.

Reference popularity follows a power law over the pool so that popular
works are cited by many documents, as in real bibliographies. A planted
pair copies ``overlap`` references of the source into the suspect; the two
documents then share exactly that many references.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .ingest import write_records

_WORDS = (
    "adaptive analysis approach architecture attention bayesian benchmark citation classification "
    "clustering coding compression computing corpus data decentralized deep detection distributed "
    "document efficient embedding estimation evaluation evidence fast feature framework graph "
    "hashing hybrid image indexing inference information integrity kernel language large learning "
    "linear matching measure memory method mining model network neural optimal parallel plagiarism "
    "privacy private probabilistic protocol query random ranking recognition representation "
    "retrieval robust scalable search secure semantic similarity sparse statistical stochastic "
    "structure study survey system text theory towards transfer trust understanding unsupervised "
    "using vector verification web"
).split()
_TAILS = ("systems", "networks", "documents", "graphs", "corpora", "streams", "models", "data")


@dataclass(frozen=True)
class PlantedPair:
    source: str
    suspect: str
    overlap: int


@dataclass
class SyntheticCorpus:
    records: list[dict[str, Any]]
    planted: list[PlantedPair]

    def write(self, path: str | Path, truth_path: str | Path | None = None) -> None:
        write_records(self.records, path)
        if truth_path is not None:
            Path(truth_path).write_text(json.dumps([asdict(p) for p in self.planted], indent=1) + "\n")


def pool_titles(pool_size: int, rng: np.random.Generator) -> list[str]:
    words = rng.integers(0, len(_WORDS), size=(pool_size, 4))
    tails = rng.integers(0, len(_TAILS), size=pool_size)
    return [
        f"{_WORDS[a]} {_WORDS[b]} {_WORDS[c]} for {_WORDS[d]} {_TAILS[t]} {i}"
        for i, ((a, b, c, d), t) in enumerate(zip(words.tolist(), tails.tolist()))
    ]


def _style(title: str, variant: int) -> str:
    # surface variation that normalization must undo
    if variant == 1:
        return title.title() + "."
    if variant == 2:
        return f"“{title[0].upper()}{title[1:]}”"
    return title


def generate(n_docs: int = 1000, refs_min: int = 10, refs_max: int = 50, pool_size: int = 20_000,
             n_planted: int = 10, overlap: tuple[int, int] = (5, 10), skew: float = 0.5,
             seed: int = 0) -> SyntheticCorpus:
    if refs_min < 1 or refs_max < refs_min:
        raise ValueError("need 1 <= refs_min <= refs_max")
    if 2 * n_planted > n_docs:
        raise ValueError("not enough documents for the requested planted pairs")
    rng = np.random.default_rng(seed)
    titles = pool_titles(pool_size, rng)
    weights = 1.0 / np.arange(1, pool_size + 1) ** skew
    weights /= weights.sum()
    # popularity rank independent of title id
    popularity = rng.permutation(pool_size)

    sizes = np.minimum(rng.integers(refs_min, refs_max + 1, size=n_docs), pool_size)
    docs: list[list[int]] = []
    for size in sizes.tolist():
        picks = rng.choice(pool_size, size=size, replace=False, p=weights)
        docs.append(popularity[picks].tolist())

    planted: list[PlantedPair] = []
    chosen = rng.choice(n_docs, size=2 * n_planted, replace=False).tolist()
    for src, sus in zip(chosen[0::2], chosen[1::2]):
        src_refs = docs[src]
        o = int(rng.integers(overlap[0], overlap[1] + 1))
        o = min(o, len(src_refs), len(docs[sus]))
        copied = rng.choice(src_refs, size=o, replace=False).tolist()
        src_set = set(src_refs)
        own = [r for r in docs[sus] if r not in src_set]
        need = min(len(docs[sus]) - o, pool_size - len(src_set))
        while len(own) < need:
            cand = int(popularity[rng.choice(pool_size, p=weights)])
            if cand not in src_set and cand not in own:
                own.append(cand)
        docs[sus] = copied + own[:need]
        planted.append(PlantedPair(_doc_id(src), _doc_id(sus), o))

    variants = rng.integers(0, 3, size=sum(len(d) for d in docs)).tolist()
    records = []
    v = 0
    for i, refs in enumerate(docs):
        out = []
        for r in refs:
            out.append({"title": _style(titles[r], variants[v])})
            v += 1
        records.append({"id": _doc_id(i), "refs": out})
    return SyntheticCorpus(records, planted)


def _doc_id(i: int) -> str:
    return f"doc{i:05d}"


def collision_fixture(seed: int = 0, n_docs: int = 300, refs: int = 20) -> SyntheticCorpus:
    """Corpus with ~n_docs * C(refs, 3) distinct 3-subsets (342,000 by default).

    Sized so that 32-bit truncated subset hashes collide with overwhelming
    probability (about 13 expected collisions) while references rarely repeat.
    """
    return generate(n_docs=n_docs, refs_min=refs, refs_max=refs, pool_size=200_000,
                    n_planted=0, skew=0.0, seed=seed)
