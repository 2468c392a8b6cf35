"""Reference/document domain types and the rules that produce hash inputs.

A reference is identified solely by its normalized title (``norm_key``);
two references with the same key are the same cited work.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import EmptyKeyError

DEFAULT_MAX_REFS = 150


def _normalize_once(text: str) -> str:
    text = unicodedata.normalize("NFKC", text).lower()
    cleaned = "".join(ch if ch.isalnum() else " " for ch in text)
    return " ".join(cleaned.split())


def normalize_title(raw: str) -> str:
    """Return the canonical key for a reference title.

    NFKC compatibility normalization, lowercasing, every non-alphanumeric
    character mapped to a space, whitespace runs collapsed and trimmed.
    Raises EmptyKeyError when nothing survives.

    >>> normalize_title("  The Quick—Brown Fox! ")
    'the quick brown fox'
    """
    key = _normalize_once(raw)
    # lower() can emit sequences that NFKC rewrites (e.g. U+0130); iterate to a fixpoint
    for _ in range(4):
        nxt = _normalize_once(key)
        if nxt == key:
            break
        key = nxt
    if not key:
        raise EmptyKeyError(raw)
    return key


@dataclass(frozen=True)
class Reference:
    """One bibliographic entry. Equality and hashing use ``norm_key`` only."""

    norm_key: str
    raw_title: str = field(default="", compare=False)
    authors: tuple[str, ...] = field(default=(), compare=False)
    year: int | None = field(default=None, compare=False)

    @classmethod
    def from_title(cls, raw_title: str, authors: Iterable[str] = (), year: int | None = None) -> "Reference":
        return cls(normalize_title(raw_title), raw_title, tuple(authors), year)


@dataclass(frozen=True)
class Document:
    doc_id: str
    refs: frozenset[Reference]

    @property
    def keys(self) -> frozenset[str]:
        return frozenset(r.norm_key for r in self.refs)

    def sorted_keys(self) -> list[str]:
        return sorted(r.norm_key for r in self.refs)

    def __len__(self) -> int:
        return len(self.refs)


@dataclass
class Corpus:
    documents: list[Document]
    k: int
    max_refs: int = DEFAULT_MAX_REFS

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def get(self, doc_id: str) -> Document | None:
        for doc in self.documents:
            if doc.doc_id == doc_id:
                return doc
        return None


def dedup_references(refs: Sequence[Reference]) -> frozenset[Reference]:
    """Keep the first occurrence of every distinct ``norm_key``."""
    seen: dict[str, Reference] = {}
    for ref in refs:
        seen.setdefault(ref.norm_key, ref)
    return frozenset(seen.values())


def make_document(doc_id: str, titles: Iterable[str]) -> Document:
    """Convenience constructor from raw title strings."""
    return Document(doc_id, dedup_references([Reference.from_title(t) for t in titles]))


def eligible(doc: Document, k: int, max_refs: int = DEFAULT_MAX_REFS) -> bool:
    return k <= len(doc.refs) <= max_refs
