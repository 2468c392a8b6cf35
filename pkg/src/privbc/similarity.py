"""Coupling scores over cleartext references and over subset-hash sets.

Scores are exact ``Fraction`` values; decimals appear only when rendering.
"""

from __future__ import annotations

import decimal
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptySetError, NotABinomialError
from .psihash import HashSet, unique_keys

SIG_DIGITS = 12


def bc_strength(refs_a: Iterable[Hashable], refs_b: Iterable[Hashable]) -> Fraction:
    """Jaccard overlap of two reference sets."""
    a, b = set(refs_a), set(refs_b)
    if not a or not b:
        raise EmptySetError("bibliographic coupling needs two non-empty reference sets")
    shared = len(a & b)
    return Fraction(shared, len(a) + len(b) - shared)


def intersection_size(h_a: HashSet, h_b: HashSet) -> int:
    # both sides are already distinct, so every duplicate in the union is a shared hash
    return len(h_a.values) + len(h_b.values) - len(unique_keys(np.concatenate([h_a.values, h_b.values])))


def jaccard_from_counts(shared: int, size_a: int, size_b: int) -> Fraction:
    union = size_a + size_b - shared
    if union <= 0:
        raise EmptySetError("union of the compared sets is empty")
    return Fraction(shared, union)


def pbc_strength(h_a: HashSet, h_b: HashSet) -> Fraction:
    """Jaccard overlap of two subset-hash sets built with the same k and hash."""
    h_a.check_compatible(h_b)
    if not len(h_a) or not len(h_b):
        raise EmptySetError("private coupling needs two non-empty hash sets")
    return jaccard_from_counts(intersection_size(h_a, h_b), len(h_a), len(h_b))


def _iroot(x: int, k: int) -> int:
    """floor(x ** (1/k)) for non-negative integers."""
    if x < 2 or k == 1:
        return x
    if k == 2:
        return math.isqrt(x)
    # integer Newton iteration, starting above the root
    r = 1 << -(-x.bit_length() // k)
    while True:
        y = ((k - 1) * r + x // r ** (k - 1)) // k
        if y >= r:
            return r
        r = y


def inverse_binomial(j: int, k: int, tolerant: bool = False) -> int:
    """The m with C(m, k) == j.

    j == 0 maps to 0. Raises NotABinomialError when j is not a binomial
    number; with ``tolerant`` the largest m with C(m, k) <= j is returned.

    Because (m-k+1)**k <= k! * C(m, k) <= m**k, the answer lies within
    k - 1 of floor((k! * j) ** (1/k)); a binary search over that window
    settles it with exact integers.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if j < 0:
        raise ValueError("j must be non-negative")
    if j == 0:
        return 0
    if k == 1:
        return j
    root = _iroot(math.factorial(k) * j, k)
    lo, hi = max(k, root), max(k, root + k - 1)
    # largest m in [lo, hi] with C(m, k) <= j
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if math.comb(mid, k) <= j:
            lo = mid
        else:
            hi = mid - 1
    if math.comb(lo, k) != j and not tolerant:
        raise NotABinomialError(j, k)
    return lo


def inverse_binomial_2_closed(j: int) -> int:
    """Closed form for k = 2: (1 + sqrt(8j + 1)) / 2, exact integer rounding."""
    return (1 + math.isqrt(8 * j + 1) + 1) // 2


def recovered_bc_from_counts(shared: int, size_a: int, size_b: int, k: int) -> Fraction:
    i = inverse_binomial(shared, k)
    a = inverse_binomial(size_a, k)
    b = inverse_binomial(size_b, k)
    return jaccard_from_counts(i, a, b)


def recovered_bc(h_a: HashSet, h_b: HashSet) -> Fraction:
    """Reference-level coupling recovered from hash-set sizes alone."""
    h_a.check_compatible(h_b)
    return recovered_bc_from_counts(intersection_size(h_a, h_b), len(h_a), len(h_b), h_a.k)


@dataclass(frozen=True)
class PairResult:
    doc_id_a: str
    doc_id_b: str
    intersection_hashes: int
    s_pbc: Fraction
    s_bc_recovered: Fraction | None  # None: counts are not binomial numbers

    def as_record(self, mode: str | None = None) -> dict:
        rec = {
            "query": self.doc_id_a,
            "candidate": self.doc_id_b,
            "intersection": self.intersection_hashes,
            "s_pbc": render_decimal(self.s_pbc),
            "s_pbc_fraction": render_fraction(self.s_pbc),
            "s_bc_recovered": render_decimal(self.s_bc_recovered),
            "s_bc_recovered_fraction": render_fraction(self.s_bc_recovered),
        }
        if mode is not None:
            rec["mode"] = mode
        return rec


def render_decimal(value: Fraction | None, digits: int = SIG_DIGITS) -> str | None:
    if value is None:
        return None
    with decimal.localcontext() as ctx:
        ctx.prec = digits
        d = decimal.Decimal(value.numerator) / decimal.Decimal(value.denominator)
    return format(d.normalize(), "f") if d else "0"


def render_fraction(value: Fraction | None) -> str | None:
    return None if value is None else f"{value.numerator}/{value.denominator}"


def rank_candidates(query: HashSet, per_doc_intersections: Iterable[tuple[str, int, int]]) -> list[PairResult]:
    """Order candidates by s_pbc descending, ties by doc_id; drop zero overlaps.

    ``per_doc_intersections`` holds (doc_id, shared hash count, |H_d'|).
    """
    results = []
    q = len(query)
    for doc_id, shared, size in per_doc_intersections:
        if shared <= 0:
            continue
        s_pbc = jaccard_from_counts(shared, q, size)
        try:
            s_bc = recovered_bc_from_counts(shared, q, size, query.k)
        except NotABinomialError:
            s_bc = None
        results.append(PairResult(query.doc_id, doc_id, shared, s_pbc, s_bc))
    results.sort(key=lambda r: (-r.s_pbc, r.doc_id_b))
    return results


def pair_exclusive_filter(matches: Mapping[object, Iterable[str]], pair: tuple[str, str]) -> int:
    """Count hashes whose corpus-wide posting set is exactly the two documents of ``pair``.

    ``matches`` maps each hash to the documents containing it.
    """
    target = set(pair)
    return sum(1 for docs in matches.values() if set(docs) == target)


def report_lines(results: Sequence[PairResult], mode: str | None = None) -> list[str]:
    """MatchReport as newline-delimited JSON records."""
    return [json.dumps(r.as_record(mode), sort_keys=True) for r in results]
