"""Masked reference hashing over k-combinations.

Every reference is digested with SHA-1 and read as a 160-bit big-endian
integer. A k-subset hashes to the sum of its members' digests modulo 2**160,
which makes the result independent of member order. Subset hashes live in
numpy arrays of dtype ``V20`` holding the big-endian bytes, so byte order and
numeric order coincide for sorting and searching.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ArityError, ConfigMismatchError, CorruptIndexError, EmptyKeyError, TooFewReferencesError
from .refmodel import Corpus, Document, Reference

log = logging.getLogger(__name__)

DIGEST_BITS = 160
DIGEST_BYTES = DIGEST_BITS // 8
MODULUS = 1 << DIGEST_BITS
KEY_DTYPE = np.dtype(f"V{DIGEST_BYTES}")

HASH_FN_SUM = "sha1-sum160"
HASH_FN_CONCAT = "sha1-concat160"
HASH_FUNCTIONS = (HASH_FN_SUM, HASH_FN_CONCAT)

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_COMBO_CACHE_LIMIT = 1 << 20


def digest_bytes(norm_key: str) -> bytes:
    if not norm_key:
        raise EmptyKeyError(norm_key)
    return hashlib.sha1(norm_key.encode("utf-8")).digest()


def digest_reference(norm_key: str) -> int:
    """160-bit SHA-1 digest of the UTF-8 key as a big-endian integer."""
    return int.from_bytes(digest_bytes(norm_key), "big")


def combine(digests: Sequence[int], k: int | None = None) -> int:
    """Sum of k digests modulo 2**160."""
    if k is not None and len(digests) != k:
        raise ArityError(f"expected {k} digests, got {len(digests)}")
    if not digests:
        raise ArityError("combine needs at least one digest")
    return sum(digests) % MODULUS


def enumerate_subsets(refs: Iterable[Reference], k: int) -> Iterator[tuple[Reference, ...]]:
    """Yield every k-combination, lexicographic over the sorted norm_keys."""
    ordered = sorted(refs, key=lambda r: r.norm_key)
    if k < 1:
        raise ArityError("k must be >= 1")
    if len(ordered) < k:
        raise TooFewReferencesError(f"{len(ordered)} references, need at least k={k}")
    return itertools.combinations(ordered, k)


# -- vectorized hashing -----------------------------------------------------

@lru_cache(maxsize=256)
def _cached_combos(n: int, k: int) -> np.ndarray:
    arr = _combo_array(n, k, math.comb(n, k))
    arr.setflags(write=False)
    return arr


def _combo_array(n: int, k: int, count: int, start: int = 0) -> np.ndarray:
    it = itertools.islice(itertools.combinations(range(n), k), start, start + count)
    flat = np.fromiter(itertools.chain.from_iterable(it), dtype=np.int32, count=count * k)
    return flat.reshape(count, k)


def combination_blocks(n: int, k: int, block: int = _COMBO_CACHE_LIMIT) -> Iterator[np.ndarray]:
    """Index arrays of shape (m, k) covering all C(n, k) combinations in order."""
    total = math.comb(n, k)
    if total <= block:
        yield _cached_combos(n, k)
        return
    combos = itertools.combinations(range(n), k)
    for start in range(0, total, block):
        m = min(block, total - start)
        flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, m)), dtype=np.int32, count=m * k)
        yield flat.reshape(m, k)


def digest_limbs(digests: Sequence[bytes]) -> np.ndarray:
    """(n, 5) uint64 array of 32-bit limbs, most significant first."""
    buf = np.frombuffer(b"".join(digests), dtype=">u4").reshape(len(digests), 5)
    return buf.astype(np.uint64)


def sum_limbs(limbs: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Modular 160-bit sums of the limb rows selected by each row of idx, packed as V20."""
    acc = limbs[idx[:, 0]].copy()
    for j in range(1, idx.shape[1]):
        acc += limbs[idx[:, j]]
    for col in range(4, 0, -1):
        acc[:, col - 1] += acc[:, col] >> _SHIFT32
        acc[:, col] &= _MASK32
    acc[:, 0] &= _MASK32
    return np.ascontiguousarray(acc.astype(">u4")).view(KEY_DTYPE).ravel()


def sum_low32(limbs: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Combined hashes when every digest is truncated to its low 32 bits."""
    low = limbs[:, 4]
    acc = low[idx[:, 0]].copy()
    for j in range(1, idx.shape[1]):
        acc += low[idx[:, j]]
    return acc & _MASK32


def _concat_hashes(digests: Sequence[bytes], idx: np.ndarray) -> np.ndarray:
    out = bytearray()
    for row in idx.tolist():
        out += hashlib.sha1(b"".join(sorted(digests[i] for i in row))).digest()
    return np.frombuffer(bytes(out), dtype=KEY_DTYPE)


def to_keys(values: Iterable[int]) -> np.ndarray:
    """Sorted unique V20 array from Python integers."""
    raw = b"".join(int(v).to_bytes(DIGEST_BYTES, "big") for v in values)
    return unique_keys(np.frombuffer(raw, dtype=KEY_DTYPE))


def key_prefixes(keys: np.ndarray) -> np.ndarray:
    """First 8 bytes of each key as a native uint64 (same order as the full key)."""
    raw = np.ascontiguousarray(keys).view(np.uint8).reshape(-1, DIGEST_BYTES)[:, :8]
    return np.ascontiguousarray(raw).view(">u8").ravel().astype(np.uint64)


def argsort_keys(keys: np.ndarray) -> np.ndarray:
    """Stable argsort of 20-byte keys.

    Sorting on the uint64 prefix is several times faster than comparing void
    records; only runs with equal prefixes are re-sorted on the remaining bytes.
    """
    prefix = key_prefixes(keys)
    order = np.argsort(prefix, kind="stable")
    tie = prefix[order][1:] == prefix[order][:-1]
    if not tie.any():
        return order
    in_run = np.zeros(len(keys), bool)
    in_run[1:] |= tie
    in_run[:-1] |= tie
    pos = np.flatnonzero(in_run)
    run = np.cumsum(np.concatenate(([True], ~tie)))[pos]
    rest = np.ascontiguousarray(keys[order[pos]]).view(np.uint8).reshape(-1, DIGEST_BYTES)
    mid = np.ascontiguousarray(rest[:, 8:16]).view(">u8").ravel()
    low = np.ascontiguousarray(rest[:, 16:]).view(">u4").ravel()
    order[pos] = order[pos][np.lexsort((pos, low, mid, run))]
    return order


def unique_keys(keys: np.ndarray) -> np.ndarray:
    """Sorted distinct keys (np.unique for V20, faster)."""
    if len(keys) < 2:
        return keys.copy()
    ordered = keys[argsort_keys(keys)]
    return ordered[np.concatenate(([True], ordered[1:] != ordered[:-1]))]


def keys_to_ints(keys: np.ndarray) -> list[int]:
    raw = keys.tobytes()
    return [int.from_bytes(raw[i:i + DIGEST_BYTES], "big") for i in range(0, len(raw), DIGEST_BYTES)]


def keys_to_hex(keys: np.ndarray) -> list[str]:
    raw = keys.tobytes().hex()
    w = 2 * DIGEST_BYTES
    return [raw[i:i + w] for i in range(0, len(raw), w)]


def hex_to_keys(values: Iterable[str]) -> np.ndarray:
    raw = b"".join(bytes.fromhex(v) for v in values)
    if len(raw) % DIGEST_BYTES:
        raise ValueError("hex values must each encode 20 bytes")
    return unique_keys(np.frombuffer(raw, dtype=KEY_DTYPE))


@dataclass(frozen=True, eq=False)
class HashSet:
    """H_d: the distinct subset hashes of one document.

    ``values`` is a sorted, duplicate-free V20 array. ``n_subsets`` is the
    number of subsets that were hashed (None when unknown, e.g. received over
    the wire); a shortfall against ``len(self)`` means combined hashes collided.
    """

    doc_id: str
    k: int
    values: np.ndarray
    hash_fn_id: str = HASH_FN_SUM
    n_subsets: int | None = None

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, value: int) -> bool:
        key = np.frombuffer(int(value).to_bytes(DIGEST_BYTES, "big"), dtype=KEY_DTYPE)
        pos = int(np.searchsorted(self.values, key)[0])
        return pos < len(self.values) and self.values[pos] == key[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HashSet):
            return NotImplemented
        return (self.k, self.hash_fn_id) == (other.k, other.hash_fn_id) and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]

    @property
    def collisions(self) -> int:
        return 0 if self.n_subsets is None else self.n_subsets - len(self.values)

    def ints(self) -> list[int]:
        return keys_to_ints(self.values)

    def hex(self) -> list[str]:
        return keys_to_hex(self.values)

    @classmethod
    def from_ints(cls, doc_id: str, k: int, values: Iterable[int], hash_fn_id: str = HASH_FN_SUM) -> "HashSet":
        return cls(doc_id, k, to_keys(values), hash_fn_id)

    @classmethod
    def from_hex(cls, doc_id: str, k: int, values: Iterable[str], hash_fn_id: str = HASH_FN_SUM) -> "HashSet":
        return cls(doc_id, k, hex_to_keys(values), hash_fn_id)

    def check_compatible(self, other: "HashSet") -> None:
        if self.k != other.k:
            raise ConfigMismatchError(f"k mismatch: {self.k} vs {other.k}")
        if self.hash_fn_id != other.hash_fn_id:
            raise ConfigMismatchError(f"hash function mismatch: {self.hash_fn_id} vs {other.hash_fn_id}")


def hash_keys(keys: Sequence[str], k: int, hash_fn_id: str = HASH_FN_SUM) -> tuple[np.ndarray, int]:
    """Sorted unique subset hashes for a set of norm_keys, plus the subset count."""
    ordered = sorted(set(keys))
    n = len(ordered)
    if k < 1:
        raise ArityError("k must be >= 1")
    if n < k:
        raise TooFewReferencesError(f"{n} references, need at least k={k}")
    digests = [digest_bytes(key) for key in ordered]
    if hash_fn_id == HASH_FN_SUM:
        limbs = digest_limbs(digests)
        parts = [sum_limbs(limbs, idx) for idx in combination_blocks(n, k)]
    elif hash_fn_id == HASH_FN_CONCAT:
        parts = [_concat_hashes(digests, idx) for idx in combination_blocks(n, k)]
    else:
        raise ConfigMismatchError(f"unknown hash function {hash_fn_id!r}")
    values = parts[0] if len(parts) == 1 else np.concatenate(parts)
    return unique_keys(values), math.comb(n, k)


def hash_document(doc: Document, k: int, hash_fn_id: str = HASH_FN_SUM) -> HashSet:
    values, n_subsets = hash_keys([r.norm_key for r in doc.refs], k, hash_fn_id)
    hs = HashSet(doc.doc_id, k, values, hash_fn_id, n_subsets)
    if hs.collisions:
        log.warning("document %s: %d combined-hash collisions among %d subsets", doc.doc_id, hs.collisions, n_subsets)
    return hs


def hash_corpus(corpus: Corpus | Sequence[Document], k: int, hash_fn_id: str = HASH_FN_SUM,
                threads: int | None = None) -> list[HashSet]:
    """Hash every document; output order follows the input regardless of threads."""
    docs = list(corpus)
    if threads == 1 or len(docs) < 2:
        return [hash_document(d, k, hash_fn_id) for d in docs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda d: hash_document(d, k, hash_fn_id), docs))


# -- collision study --------------------------------------------------------

def distinct_subsets(corpus: Corpus | Sequence[Document], k: int) -> tuple[list[str], np.ndarray]:
    """All distinct k-subsets across the corpus as rows of sorted key ids."""
    keys = sorted({r.norm_key for d in corpus for r in d.refs})
    key_id = {key: i for i, key in enumerate(keys)}
    blocks = []
    for doc in corpus:
        if len(doc.refs) < k:
            continue
        ids = np.array(sorted(key_id[r.norm_key] for r in doc.refs), dtype=np.int64)
        for idx in combination_blocks(len(ids), k):
            blocks.append(ids[idx])
    if not blocks:
        return keys, np.empty((0, k), dtype=np.int64)
    return keys, np.unique(np.concatenate(blocks), axis=0)


def count_collisions(corpus: Corpus | Sequence[Document], k: int, digest_width_bits: int = DIGEST_BITS) -> int:
    """Number of unordered pairs of distinct subsets whose combined hashes are equal.

    ``digest_width_bits=32`` truncates every digest to its low 32 bits before
    combining (sums then taken modulo 2**32), standing in for a 32-bit checksum.
    """
    if digest_width_bits not in (32, DIGEST_BITS):
        raise ValueError("digest_width_bits must be 32 or 160")
    keys, subsets = distinct_subsets(corpus, k)
    if len(subsets) < 2:
        return 0
    limbs = digest_limbs([digest_bytes(key) for key in keys])
    if digest_width_bits == 32:
        hashes = sum_low32(limbs, subsets)
    else:
        hashes = sum_limbs(limbs, subsets)
    _, counts = np.unique(hashes, return_counts=True)
    counts = counts[counts > 1].astype(np.int64)
    return int((counts * (counts - 1) // 2).sum())


# -- hash-set files ---------------------------------------------------------

HASHSET_MAGIC = b"PBCHSET1"
_HASHSET_HEADER = struct.Struct(">8sHQ")


def hashset_to_bytes(hs: HashSet) -> bytes:
    """Binary export: magic, k (u16), count (u64), then sorted 20-byte values."""
    return _HASHSET_HEADER.pack(HASHSET_MAGIC, hs.k, len(hs)) + hs.values.tobytes()


def hashset_from_bytes(data: bytes, doc_id: str, hash_fn_id: str = HASH_FN_SUM) -> HashSet:
    if len(data) < _HASHSET_HEADER.size:
        raise CorruptIndexError("hash-set file too short")
    magic, k, count = _HASHSET_HEADER.unpack_from(data)
    if magic != HASHSET_MAGIC:
        raise CorruptIndexError("bad hash-set magic")
    body = data[_HASHSET_HEADER.size:]
    if len(body) != count * DIGEST_BYTES:
        raise CorruptIndexError(f"expected {count} hashes, found {len(body) / DIGEST_BYTES:g}")
    return HashSet(doc_id, k, unique_keys(np.frombuffer(body, dtype=KEY_DTYPE)), hash_fn_id)


def write_hashset(hs: HashSet, path: str | Path, fmt: str = "binary") -> None:
    if fmt == "binary":
        Path(path).write_bytes(hashset_to_bytes(hs))
    elif fmt == "hex":
        Path(path).write_text("".join(h + "\n" for h in hs.hex()), encoding="ascii")
    else:
        raise ValueError(f"unknown hash-set format {fmt!r}")


def read_hashset(path: str | Path, k: int | None = None, doc_id: str | None = None,
                 hash_fn_id: str = HASH_FN_SUM) -> HashSet:
    """Read a binary or hex hash-set file; hex files need ``k`` from the caller."""
    p = Path(path)
    data = p.read_bytes()
    name = doc_id or p.stem
    if data.startswith(HASHSET_MAGIC):
        return hashset_from_bytes(data, name, hash_fn_id)
    if k is None:
        raise ValueError("k is required for hex hash-set files")
    lines = [ln.strip() for ln in data.decode("ascii").splitlines() if ln.strip()]
    return HashSet.from_hex(name, k, lines, hash_fn_id)
