import collections
import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import binom, sha1_pure, subset_hashes
from privbc import psihash
from privbc.errors import ArityError, CorruptIndexError, EmptyKeyError, TooFewReferencesError
from privbc.ingest import parse_document
from privbc.psihash import (
    HASH_FN_CONCAT, HashSet, combine, count_collisions, digest_reference, enumerate_subsets, hash_document,
    hashset_from_bytes, hashset_to_bytes, read_hashset, write_hashset,
)
from privbc.refmodel import Reference, make_document
from privbc.synth import collision_fixture

FOX_SHA1 = "ced71fa7235231bed383facfdc41c4ddcc22ecf1"  # from oracles.sha1_pure


def test_digest_matches_independent_sha1():
    assert sha1_pure(b"abc").hex() == "a9993e364706816aba3e25717850c26c9cd0d89d"
    assert sha1_pure(b"the quick brown fox").hex() == FOX_SHA1
    assert digest_reference("the quick brown fox") == int(FOX_SHA1, 16)
    for key in ["a", "bibliographic coupling", "ü" * 70]:
        assert digest_reference(key) == int.from_bytes(sha1_pure(key.encode()), "big")


def test_digest_deterministic_and_fixed_width():
    assert digest_reference("same key") == digest_reference("same key")
    assert all(digest_reference("x" * n) < 2**160 for n in (1, 100, 10_000))
    with pytest.raises(EmptyKeyError):
        digest_reference("")


def test_digest_no_collisions_in_million_key_pool():
    values = {digest_reference(f"synthetic reference {i}") for i in range(1_000_000)}
    assert len(values) == 1_000_000


def test_combine_examples():
    h1, h2 = digest_reference("a"), digest_reference("b")
    assert combine([h1], k=1) == h1
    assert combine([h1, h2]) == combine([h2, h1])
    assert combine([2**160 - 1, 1], k=2) == 0
    with pytest.raises(ArityError):
        combine([h1, h2], k=3)


@given(st.lists(st.integers(0, 2**160 - 1), min_size=1, max_size=5), st.randoms())
def test_combine_order_invariant(values, rnd):
    shuffled = values[:]
    rnd.shuffle(shuffled)
    assert combine(values) == combine(shuffled) == sum(values) % 2**160


def _refs(*titles):
    return {Reference.from_title(t) for t in titles}


def test_enumerate_subsets_examples():
    got = [tuple(r.norm_key for r in s) for s in enumerate_subsets(_refs("c", "a", "b"), 2)]
    assert got == [("a", "b"), ("a", "c"), ("b", "c")]
    assert len(list(enumerate_subsets(_refs("a", "b", "c"), 3))) == 1
    with pytest.raises(TooFewReferencesError):
        enumerate_subsets(_refs("a"), 2)


def test_enumerate_subsets_150_choose_3():
    refs = _refs(*[f"ref {i}" for i in range(150)])
    assert 150 * 149 * 148 // 6 == 551_300
    assert sum(1 for _ in enumerate_subsets(refs, 3)) == 551_300


@pytest.mark.parametrize("n, k", [(5, 1), (10, 2), (12, 3), (9, 4), (150, 2)])
def test_combination_blocks_cardinality(n, k):
    total = sum(len(b) for b in psihash.combination_blocks(n, k))
    assert total == binom(n, k)


def test_combination_blocks_chunked_matches_itertools():
    blocks = list(psihash.combination_blocks(12, 3, block=50))
    assert len(blocks) > 1
    stacked = np.concatenate(blocks)
    assert [tuple(r) for r in stacked.tolist()] == list(itertools.combinations(range(12), 3))


def test_hash_document_examples():
    hs = hash_document(make_document("d", ["a", "b", "c"]), 2)
    assert len(hs) == 3 and hs.n_subsets == 3 and hs.collisions == 0
    single = hash_document(make_document("d", ["a"]), 1)
    assert single.ints() == [digest_reference("a")]
    ten = hash_document(make_document("d", [f"r{i}" for i in range(10)]), 2)
    assert len(ten) == 45
    with pytest.raises(TooFewReferencesError):
        hash_document(make_document("d", ["a"]), 2)


keys_strategy = st.sets(st.text(alphabet="abcdefghij ", min_size=1, max_size=8).map(str.strip).filter(bool),
                        min_size=1, max_size=14)


@settings(max_examples=60, deadline=None)
@given(keys_strategy, st.integers(1, 4))
def test_hash_document_matches_integer_oracle(keys, k):
    if len(keys) < k:
        return
    doc = make_document("d", sorted(keys))
    hs = hash_document(doc, k)
    assert set(hs.ints()) == subset_hashes(doc.keys, k)
    assert hs.n_subsets == binom(len(doc.keys), k)


def test_hash_document_pure_function_of_keys():
    a = hash_document(make_document("x", ["One", "two", "Three"]), 2)
    b = hash_document(make_document("y", ["three.", "ONE", "two"]), 2)
    assert a == b


def test_k1_equals_per_reference_digests():
    doc = make_document("d", ["p", "q", "r", "s"])
    assert set(hash_document(doc, 1).ints()) == {digest_reference(k) for k in doc.keys}


def test_concat_mode():
    doc = make_document("d", [f"r{i}" for i in range(8)])
    hs = hash_document(doc, 3, HASH_FN_CONCAT)
    assert len(hs) == binom(8, 3) and hs.hash_fn_id == HASH_FN_CONCAT
    import hashlib
    d = {k: hashlib.sha1(k.encode()).digest() for k in doc.keys}
    expected = {int.from_bytes(hashlib.sha1(b"".join(sorted(d[x] for x in c))).digest(), "big")
                for c in itertools.combinations(sorted(d), 3)}
    assert set(hs.ints()) == expected


def test_within_document_collision_is_surfaced(monkeypatch, caplog):
    fake = {"a": 1, "b": 2, "c": 3, "d": 4}
    monkeypatch.setattr(psihash, "digest_bytes", lambda key: fake[key].to_bytes(20, "big"))
    hs = hash_document(make_document("d", list(fake)), 2)
    # pair sums 3,4,5,5,6,7: {a,d} and {b,c} collide
    assert hs.n_subsets == 6 and len(hs) == 5 and hs.collisions == 1
    assert "collision" in caplog.text


def test_count_collisions_identical_documents():
    docs = [make_document(f"d{i}", ["a", "b", "c", "d"]) for i in range(5)]
    assert count_collisions(docs, 3, 32) == 0
    assert count_collisions(docs, 3, 160) == 0


def test_count_collisions_crafted(monkeypatch):
    fake = {"a": 1, "b": 2, "c": 3, "d": 4}
    monkeypatch.setattr(psihash, "digest_bytes", lambda key: fake[key].to_bytes(20, "big"))
    docs = [make_document("x", ["a", "d"]), make_document("y", ["b", "c"]), make_document("z", ["a", "d"])]
    assert count_collisions(docs, 2, 160) == 1


@pytest.fixture(scope="module")
def birthday_docs():
    return [parse_document(r) for r in collision_fixture(seed=0).records]


def test_collision_fixture_birthday(birthday_docs):
    keys, subsets = psihash.distinct_subsets(birthday_docs, 3)
    assert len(subsets) >= 300_000

    # brute force over Python ints: low 32 bits of each digest, summed mod 2**32
    low = {k: digest_reference(k) & 0xFFFFFFFF for k in keys}
    seen = {combo for doc in birthday_docs for combo in itertools.combinations(sorted(doc.keys), 3)}
    buckets = collections.Counter(sum(low[x] for x in combo) & 0xFFFFFFFF for combo in seen)
    expected32 = sum(c * (c - 1) // 2 for c in buckets.values())

    assert len(seen) == len(subsets)
    assert count_collisions(birthday_docs, 3, 32) == expected32 >= 1
    assert count_collisions(birthday_docs, 3, 160) == 0


def test_hashset_binary_layout(tmp_path):
    hs = hash_document(make_document("d", ["a", "b", "c"]), 2)
    raw = hashset_to_bytes(hs)
    assert raw[:8] == b"PBCHSET1"
    assert struct.unpack(">HQ", raw[8:18]) == (2, 3)
    body = [int.from_bytes(raw[18 + 20 * i:38 + 20 * i], "big") for i in range(3)]
    assert body == sorted(hs.ints())
    assert hashset_from_bytes(raw, "d") == hs
    with pytest.raises(CorruptIndexError):
        hashset_from_bytes(raw[:-1], "d")
    with pytest.raises(CorruptIndexError):
        hashset_from_bytes(b"XXXXXXXX" + raw[8:], "d")


def test_hashset_file_round_trip(tmp_path):
    hs = hash_document(make_document("doc", [f"r{i}" for i in range(6)]), 3)
    write_hashset(hs, tmp_path / "doc.bin")
    write_hashset(hs, tmp_path / "doc.hex", fmt="hex")
    lines = (tmp_path / "doc.hex").read_text().splitlines()
    assert lines == sorted(lines) and all(len(x) == 40 for x in lines)
    assert read_hashset(tmp_path / "doc.bin") == hs
    assert read_hashset(tmp_path / "doc.hex", k=3) == hs


def test_hashset_membership_and_conversions():
    hs = HashSet.from_ints("d", 1, [5, 3, 5, 2**160 - 1])
    assert len(hs) == 3 and hs.ints() == [3, 5, 2**160 - 1]
    assert 5 in hs and 4 not in hs
    assert HashSet.from_hex("d", 1, hs.hex()) == hs


@settings(max_examples=80, deadline=None)
@given(st.lists(st.binary(min_size=20, max_size=20).map(lambda b: bytes(b[:1]) + bytes(7) + b[8:]), max_size=60),
       st.lists(st.binary(min_size=20, max_size=20), max_size=20))
def test_argsort_keys_matches_stable_void_argsort(tied, free):
    # a mostly zero prefix forces ties on the first 8 bytes; duplicates come from short draws
    raw = tied + free + tied[: len(tied) // 2]
    keys = np.frombuffer(b"".join(raw), dtype=psihash.KEY_DTYPE) if raw else np.empty(0, psihash.KEY_DTYPE)
    assert np.array_equal(psihash.argsort_keys(keys), np.argsort(keys, kind="stable"))
    assert np.array_equal(psihash.unique_keys(keys), np.unique(keys))
