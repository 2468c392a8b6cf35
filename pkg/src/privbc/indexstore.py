"""Inverted index from subset hash to the documents that contain it.

The index is an immutable snapshot in CSR form: a sorted array of distinct
hashes, an offsets array, and a flat array of document ordinals (ordinal =
position of the doc_id in sorted order, so posting lists are sorted by
doc_id). Updates return a new snapshot; readers holding the old one are
never affected.

On-disk layout, all integers big-endian::

    magic "PBCINDEX" | version u16 | k u16 | len u16 + hash_fn_id ascii
    | n_docs u32 | n_entries u64 | n_postings u64 | body_len u64 | crc32(body) u32
    body: n_entries x (hash 20B, varint count, varint ordinal deltas)
          n_docs x (varint len, doc_id utf-8, varint |H_d|)
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import _varint
from .errors import ConfigMismatchError, CorruptIndexError, EmptyIndexError
from .psihash import (
    DIGEST_BYTES, HASH_FN_SUM, KEY_DTYPE, HashSet, argsort_keys, hash_corpus, key_prefixes, keys_to_hex, keys_to_ints,
)
from .refmodel import Corpus, Document

MAGIC = b"PBCINDEX"
VERSION = 1
_HEAD = struct.Struct(">8sHHH")
_TAIL = struct.Struct(">IQQQI")


class InvertedIndex:
    def __init__(self, k: int, hash_fn_id: str, doc_ids: Sequence[str], doc_sizes: np.ndarray,
                 keys: np.ndarray, offsets: np.ndarray, postings: np.ndarray):
        self.k = k
        self.hash_fn_id = hash_fn_id
        self.doc_ids = list(doc_ids)
        self.doc_sizes = _frozen(np.asarray(doc_sizes, dtype=np.int64))
        self.keys = _frozen(keys)
        self.offsets = _frozen(np.asarray(offsets, dtype=np.int64))
        self.postings = _frozen(np.asarray(postings, dtype=np.int64))
        self._ordinal = {d: i for i, d in enumerate(self.doc_ids)}
        # first 8 bytes as native uint64: cheap searchsorted before the exact 20-byte check
        self._prefix = _frozen(key_prefixes(self.keys))

    @classmethod
    def empty(cls, k: int, hash_fn_id: str = HASH_FN_SUM) -> "InvertedIndex":
        return cls(k, hash_fn_id, [], np.empty(0, np.int64), np.empty(0, KEY_DTYPE),
                   np.zeros(1, np.int64), np.empty(0, np.int64))

    @classmethod
    def from_hashsets(cls, hashsets: Iterable[HashSet], k: int, hash_fn_id: str = HASH_FN_SUM) -> "InvertedIndex":
        by_id: dict[str, HashSet] = {}
        for hs in hashsets:
            if hs.k != k or hs.hash_fn_id != hash_fn_id:
                raise ConfigMismatchError(f"{hs.doc_id}: hash set built with k={hs.k}/{hs.hash_fn_id}, "
                                          f"index uses k={k}/{hash_fn_id}")
            if hs.doc_id in by_id:
                raise ValueError(f"duplicate document id {hs.doc_id!r}")
            by_id[hs.doc_id] = hs
        doc_ids = sorted(by_id)
        if not doc_ids:
            return cls.empty(k, hash_fn_id)
        sets = [by_id[d] for d in doc_ids]
        sizes = np.array([len(hs) for hs in sets], dtype=np.int64)
        flat_keys = np.concatenate([hs.values for hs in sets])
        flat_docs = np.repeat(np.arange(len(sets), dtype=np.int64), sizes)
        return cls._from_records(k, hash_fn_id, doc_ids, sizes, flat_keys, flat_docs)

    @classmethod
    def _from_records(cls, k, hash_fn_id, doc_ids, sizes, flat_keys, flat_docs) -> "InvertedIndex":
        # records arrive grouped by ascending ordinal, so a stable sort keeps postings ordered
        order = argsort_keys(flat_keys)
        skeys = flat_keys[order]
        postings = flat_docs[order]
        if len(skeys):
            starts = np.flatnonzero(np.concatenate(([True], skeys[1:] != skeys[:-1])))
        else:
            starts = np.empty(0, np.int64)
        offsets = np.append(starts, len(skeys)).astype(np.int64)
        return cls(k, hash_fn_id, doc_ids, sizes, skeys[starts], offsets, postings)

    # -- basic views --------------------------------------------------------

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def n_entries(self) -> int:
        return len(self.keys)

    @property
    def n_postings(self) -> int:
        return len(self.postings)

    def doc_size_map(self) -> dict[str, int]:
        return dict(zip(self.doc_ids, self.doc_sizes.tolist()))

    def posting_lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def entries(self) -> Iterator[tuple[int, list[str]]]:
        ints = keys_to_ints(self.keys)
        for i, value in enumerate(ints):
            yield value, [self.doc_ids[o] for o in self.postings[self.offsets[i]:self.offsets[i + 1]]]

    def postings_of(self, value: int) -> list[str]:
        key = np.frombuffer(int(value).to_bytes(DIGEST_BYTES, "big"), dtype=KEY_DTYPE)
        (hit,), (entry,) = self._locate(key)
        if not hit:
            return []
        return [self.doc_ids[o] for o in self.postings[self.offsets[entry]:self.offsets[entry + 1]]]

    def hashes_of(self, doc_id: str) -> np.ndarray:
        ordinal = self._ordinal[doc_id]
        rows = np.repeat(np.arange(self.n_entries), self.posting_lengths())
        return self.keys[rows[self.postings == ordinal]]

    def hashset_of(self, doc_id: str) -> HashSet:
        return HashSet(doc_id, self.k, self.hashes_of(doc_id), self.hash_fn_id)

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._ordinal

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        return (self.k == other.k and self.hash_fn_id == other.hash_fn_id and self.doc_ids == other.doc_ids
                and np.array_equal(self.doc_sizes, other.doc_sizes) and np.array_equal(self.keys, other.keys)
                and np.array_equal(self.offsets, other.offsets) and np.array_equal(self.postings, other.postings))

    __hash__ = None  # type: ignore[assignment]

    # -- lookup -------------------------------------------------------------

    def _locate(self, query_keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(found mask, entry index) for each query key."""
        n = self.n_entries
        if n == 0 or len(query_keys) == 0:
            return np.zeros(len(query_keys), bool), np.zeros(len(query_keys), np.int64)
        qp = key_prefixes(query_keys)
        pos = np.searchsorted(self._prefix, qp)
        clipped = np.minimum(pos, n - 1)
        found = (pos < n) & (self.keys[clipped] == query_keys)
        # equal 8-byte prefixes but different keys: fall back to a full-width search
        ambiguous = ~found & (pos < n) & (self._prefix[clipped] == qp)
        if ambiguous.any():
            exact = np.searchsorted(self.keys, query_keys[ambiguous])
            ok = exact < n
            ok[ok] = self.keys[exact[ok]] == query_keys[ambiguous][ok]
            sub = np.flatnonzero(ambiguous)
            found[sub] = ok
            clipped[sub] = np.where(ok, exact, clipped[sub])
        return found, clipped

    def check_query(self, query: HashSet) -> None:
        if query.k != self.k:
            raise ConfigMismatchError(f"query k={query.k}, index k={self.k}")
        if query.hash_fn_id != self.hash_fn_id:
            raise ConfigMismatchError(f"query hash {query.hash_fn_id!r}, index hash {self.hash_fn_id!r}")

    # -- updates (copy-on-write) -------------------------------------------

    def with_hashset(self, hs: HashSet) -> "InvertedIndex":
        """New snapshot with ``hs`` added, replacing any set under the same doc_id."""
        if hs.k != self.k or hs.hash_fn_id != self.hash_fn_id:
            raise ConfigMismatchError(f"hash set k={hs.k}/{hs.hash_fn_id} does not match index "
                                      f"k={self.k}/{self.hash_fn_id}")
        base = self.without(hs.doc_id)
        doc_ids = sorted(base.doc_ids + [hs.doc_id])
        new_ord = doc_ids.index(hs.doc_id)
        rows = np.repeat(np.arange(base.n_entries), base.posting_lengths())
        old_docs = base.postings + (base.postings >= new_ord)
        flat_keys = np.concatenate([base.keys[rows], hs.values])
        flat_docs = np.concatenate([old_docs, np.full(len(hs), new_ord, np.int64)])
        # restore ordinal grouping before the stable sort
        order = np.argsort(flat_docs, kind="stable")
        sizes = np.insert(base.doc_sizes, new_ord, len(hs))
        return InvertedIndex._from_records(self.k, self.hash_fn_id, doc_ids, sizes, flat_keys[order], flat_docs[order])

    def without(self, doc_id: str) -> "InvertedIndex":
        if doc_id not in self._ordinal:
            return self
        ordinal = self._ordinal[doc_id]
        lengths = self.posting_lengths()
        rows = np.repeat(np.arange(self.n_entries), lengths)
        keep = self.postings != ordinal
        rows, docs = rows[keep], self.postings[keep]
        docs = docs - (docs > ordinal)
        new_lengths = np.bincount(rows, minlength=self.n_entries)
        live = new_lengths > 0
        offsets = np.concatenate(([0], np.cumsum(new_lengths[live]))).astype(np.int64)
        doc_ids = self.doc_ids[:ordinal] + self.doc_ids[ordinal + 1:]
        sizes = np.delete(self.doc_sizes, ordinal)
        return InvertedIndex(self.k, self.hash_fn_id, doc_ids, sizes, self.keys[live], offsets, docs)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def build_index(corpus: Corpus | Sequence[Document], k: int, hash_fn_id: str = HASH_FN_SUM,
                threads: int | None = None) -> InvertedIndex:
    """Hash every document (optionally in parallel) and merge into one index."""
    return InvertedIndex.from_hashsets(hash_corpus(corpus, k, hash_fn_id, threads), k, hash_fn_id)


def intersect(query: HashSet, index: InvertedIndex, *, exclude: str | None = None,
              exclusive: bool = False) -> list[tuple[str, int, int]]:
    """Shared-hash counts (doc_id, |H_q ∩ H_d|, |H_d|) for every overlapping document.

    ``exclude`` drops one doc_id (typically the query's own entry).
    With ``exclusive`` only hashes held by a single indexed document (the
    excluded doc aside) count, i.e. hashes unique to the (query, candidate) pair.
    """
    index.check_query(query)
    found, entry = index._locate(query.values)
    hit = entry[found]
    starts = index.offsets[hit]
    lengths = index.offsets[hit + 1] - starts
    total = int(lengths.sum())
    if total == 0:
        return []
    seg = np.repeat(np.arange(len(hit)), lengths)
    pos = np.arange(total) - np.repeat(np.cumsum(lengths) - lengths, lengths) + np.repeat(starts, lengths)
    docs = index.postings[pos]
    skip = index._ordinal.get(exclude, -1) if exclude is not None else -1
    if skip >= 0:
        keep = docs != skip
        docs, seg = docs[keep], seg[keep]
    if exclusive:
        per_entry = np.bincount(seg, minlength=len(hit))
        keep = per_entry[seg] == 1
        docs = docs[keep]
    counts = np.bincount(docs, minlength=index.n_docs)
    nz = np.flatnonzero(counts)
    return [(index.doc_ids[o], int(counts[o]), int(index.doc_sizes[o])) for o in nz]


@dataclass(frozen=True)
class OccurrenceHistogram:
    total_hashes: int
    ratio_in_1: Fraction
    ratio_in_2: Fraction
    ratio_in_3: Fraction

    def as_dict(self) -> dict:
        return {
            "total_hashes": self.total_hashes,
            "ratio_in_1": float(self.ratio_in_1),
            "ratio_in_2": float(self.ratio_in_2),
            "ratio_in_3": float(self.ratio_in_3),
        }


def occurrence_histogram(index: InvertedIndex) -> OccurrenceHistogram:
    """Share of distinct hashes whose posting list has length exactly 1, 2 and 3."""
    if index.n_entries == 0:
        raise EmptyIndexError("occurrence histogram of an empty index")
    counts = np.bincount(index.posting_lengths(), minlength=4)
    n = index.n_entries
    return OccurrenceHistogram(n, Fraction(int(counts[1]), n), Fraction(int(counts[2]), n), Fraction(int(counts[3]), n))


def stats(index: InvertedIndex, n_bytes: int | None = None) -> dict:
    out = {
        "k": index.k,
        "hash_fn_id": index.hash_fn_id,
        "n_docs": index.n_docs,
        "n_hashes": index.n_entries,
        "n_postings": index.n_postings,
        "histogram": occurrence_histogram(index).as_dict() if index.n_entries else
        {"total_hashes": 0, "ratio_in_1": 0.0, "ratio_in_2": 0.0, "ratio_in_3": 0.0},
    }
    if n_bytes is not None:
        out["bytes"] = n_bytes
    return out


def stats_text(info: dict) -> str:
    h = info["histogram"]
    lines = [
        f"k              {info['k']}",
        f"hash function  {info['hash_fn_id']}",
        f"documents      {info['n_docs']:,}",
        f"distinct hashes {info['n_hashes']:,}",
        f"postings       {info['n_postings']:,}",
        f"ratio in 1/2/3 docs  {h['ratio_in_1']:.3f}/{h['ratio_in_2']:.3f}/{h['ratio_in_3']:.3f}",
    ]
    if "bytes" in info:
        lines.append(f"bytes          {info['bytes']:,}")
    return "\n".join(lines)


# -- persistence ------------------------------------------------------------

def _uvarint(v: int) -> bytes:
    out = bytearray()
    while v >= 128:
        out.append((v & 127) | 128)
        v >>= 7
    out.append(v)
    return bytes(out)


def _read_uvarint(data: bytes, pos: int) -> tuple[int, int]:
    v = shift = 0
    while True:
        if pos >= len(data):
            raise CorruptIndexError("truncated varint in document table")
        b = data[pos]
        pos += 1
        v |= (b & 127) << shift
        if b < 128:
            return v, pos
        shift += 7


def to_bytes(index: InvertedIndex) -> bytes:
    key_bytes = np.ascontiguousarray(index.keys).view(np.uint8).reshape(-1, DIGEST_BYTES)
    entries = _varint.encode_entries(key_bytes, index.offsets, index.postings).tobytes()
    table = bytearray()
    for doc_id, size in zip(index.doc_ids, index.doc_sizes.tolist()):
        raw = doc_id.encode("utf-8")
        table += _uvarint(len(raw)) + raw + _uvarint(size)
    body = entries + bytes(table)
    fn = index.hash_fn_id.encode("ascii")
    head = _HEAD.pack(MAGIC, VERSION, index.k, len(fn)) + fn
    tail = _TAIL.pack(index.n_docs, index.n_entries, index.n_postings, len(body), zlib.crc32(body))
    return head + tail + body


def from_bytes(data: bytes) -> InvertedIndex:
    if len(data) < _HEAD.size:
        raise CorruptIndexError("index file too short for header")
    magic, version, k, fn_len = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise CorruptIndexError("bad magic: not a privbc index file")
    if version != VERSION:
        raise CorruptIndexError(f"unsupported index version {version}")
    pos = _HEAD.size
    if len(data) < pos + fn_len + _TAIL.size:
        raise CorruptIndexError("index file too short for header")
    hash_fn_id = data[pos:pos + fn_len].decode("ascii")
    pos += fn_len
    n_docs, n_entries, n_postings, body_len, crc = _TAIL.unpack_from(data, pos)
    pos += _TAIL.size
    body = data[pos:]
    if len(body) != body_len:
        raise CorruptIndexError(f"body is {len(body)} bytes, header says {body_len}")
    if zlib.crc32(body) != crc:
        raise CorruptIndexError("checksum mismatch")

    buf = np.frombuffer(body, dtype=np.uint8)
    key_bytes, offsets, postings, end, status = _varint.decode_entries(buf, 0, n_entries, n_postings)
    if status != 0:
        raise CorruptIndexError(f"entry section malformed (status {status})")
    doc_ids, sizes = [], []
    for _ in range(n_docs):
        n, end = _read_uvarint(body, end)
        doc_ids.append(body[end:end + n].decode("utf-8"))
        end += n
        size, end = _read_uvarint(body, end)
        sizes.append(size)
    if end != len(body):
        raise CorruptIndexError("trailing bytes after document table")
    if len(postings) and int(postings.max()) >= n_docs:
        raise CorruptIndexError("posting refers to an unknown document")
    keys = np.ascontiguousarray(key_bytes).view(KEY_DTYPE).ravel()
    return InvertedIndex(k, hash_fn_id, doc_ids, np.array(sizes, dtype=np.int64), keys, offsets, postings)


def persist(index: InvertedIndex, path: str | Path) -> int:
    """Write atomically (temp file + rename); returns the byte size."""
    data = to_bytes(index)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(data)


def load(path: str | Path) -> InvertedIndex:
    return from_bytes(Path(path).read_bytes())


def dump_entries_hex(index: InvertedIndex) -> Iterator[str]:
    """Debug listing: one line per entry, hex hash followed by its doc_ids."""
    for hx, i in zip(keys_to_hex(index.keys), range(index.n_entries)):
        docs = [index.doc_ids[o] for o in index.postings[index.offsets[i]:index.offsets[i + 1]]]
        yield hx + "\t" + " ".join(docs)
