"""Cost model for preimage attacks on subset-hash sets.

An attacker who knows the universe of n candidate references must hash all
C(n, k) subsets to invert one document's hashes. Counts are exact integers;
floating point enters only when multiplying by the per-hash time.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable

from .errors import InvalidParameterError

SECONDS_PER_HOUR = 3600
SECONDS_PER_YEAR = 31_557_600  # Julian year

# dblp record count, May 2020
DBLP_RECORDS = 5_050_000


@dataclass(frozen=True)
class AttackEstimate:
    n_refs: int
    k: int
    per_hash_seconds: float
    n_hashes: int
    runtime_seconds: float
    runtime_human: str

    @property
    def runtime_hours(self) -> float:
        return self.runtime_seconds / SECONDS_PER_HOUR

    @property
    def runtime_years(self) -> float:
        return self.runtime_seconds / SECONDS_PER_YEAR


def _exact(x: float | int | str | Fraction) -> Fraction:
    # floats go through repr so 0.001 means 1/1000, not its binary neighbour
    return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


def human_duration(seconds: float) -> str:
    if seconds < SECONDS_PER_HOUR:
        return f"{seconds:.3g} s"
    hours = seconds / SECONDS_PER_HOUR
    if hours < 10_000:
        return f"{hours:,.2f} h"
    years = seconds / SECONDS_PER_YEAR
    for scale, word in ((1e9, "billion"), (1e6, "million")):
        if years >= scale:
            return f"{years / scale:,.1f} {word} years"
    return f"{years:,.0f} years"


def estimate(n_refs: int, k: int, per_hash_seconds: float) -> AttackEstimate:
    if k < 1 or n_refs < k:
        raise InvalidParameterError(f"need n_refs >= k >= 1, got n_refs={n_refs}, k={k}")
    if not per_hash_seconds > 0:
        raise InvalidParameterError("per_hash_seconds must be positive")
    n_hashes = math.comb(n_refs, k)
    runtime = float(n_hashes * _exact(per_hash_seconds))
    return AttackEstimate(n_refs, k, per_hash_seconds, n_hashes, runtime, human_duration(runtime))


def min_universe_for_budget(k: int, per_hash_seconds: float, budget_seconds: float) -> int:
    """Smallest n with C(n, k) * per_hash_seconds > budget_seconds."""
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    if not per_hash_seconds > 0 or not budget_seconds > 0:
        raise InvalidParameterError("per_hash_seconds and budget_seconds must be positive")
    t, budget = _exact(per_hash_seconds), _exact(budget_seconds)

    def exceeds(n: int) -> bool:
        return math.comb(n, k) * t > budget

    lo, hi = k, k
    while not exceeds(hi):
        lo, hi = hi, hi * 2
    # exceeds(hi) holds; find the first n in (lo, hi] where it does
    if exceeds(lo):
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if exceeds(mid):
            hi = mid
        else:
            lo = mid
    return hi


def sweep(k_values: Iterable[int], n_values: Iterable[int], per_hash_seconds: float) -> list[AttackEstimate]:
    ns = list(n_values)
    return [estimate(n, k, per_hash_seconds) for k in k_values for n in ns]


def dblp_preset(per_hash_seconds: float = 0.001) -> list[AttackEstimate]:
    return sweep((1, 2, 3), (DBLP_RECORDS,), per_hash_seconds)


_COLUMNS = ("n_refs", "k", "per_hash_seconds", "n_hashes", "runtime_seconds", "runtime_human")


def to_csv(rows: list[AttackEstimate]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(asdict(row))
    return buf.getvalue()


def to_text(rows: list[AttackEstimate]) -> str:
    header = ("n", "k", "s/hash", "hashes", "runtime [s]", "runtime")
    body = [(f"{r.n_refs:,}", str(r.k), f"{r.per_hash_seconds:g}", f"{r.n_hashes:.4g}",
             f"{r.runtime_seconds:.4g}", r.runtime_human) for r in rows]
    widths = [max(len(c) for c in col) for col in zip(header, *body)] if body else [len(h) for h in header]
    lines = ["  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in [header, *body]]
    return "\n".join(lines) + "\n"
