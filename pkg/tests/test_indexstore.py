import random
import struct
import threading
import zlib
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import binom, subset_hashes
from privbc import indexstore
from privbc.errors import ConfigMismatchError, CorruptIndexError, EmptyIndexError
from privbc.indexstore import InvertedIndex, build_index, intersect, occurrence_histogram
from privbc.psihash import HASH_FN_CONCAT, HashSet, hash_corpus, hash_document
from privbc.refmodel import make_document


def _entries(index):
    return {value: docs for value, docs in index.entries()}


def test_build_single_document():
    ix = build_index([make_document("d", ["a", "b", "c"])], 2)
    assert ix.n_entries == 3 and all(docs == ["d"] for docs in _entries(ix).values())


def test_build_identical_documents():
    ix = build_index([make_document(i, ["a", "b", "c"]) for i in ("x", "y")], 2)
    assert ix.n_entries == 3 and all(docs == ["x", "y"] for docs in _entries(ix).values())


def test_build_matches_bruteforce_entries(abc_docs):
    ix = build_index(abc_docs, 2)
    expected = {}
    for doc in abc_docs:
        for h in subset_hashes(doc.keys, 2):
            expected.setdefault(h, []).append(doc.doc_id)
    assert _entries(ix) == expected
    assert ix.n_postings == sum(binom(len(d.keys), 2) for d in abc_docs)
    assert ix.doc_size_map() == {"A": 3, "B": 3, "C": 3}


def test_build_parallelism_does_not_change_content(small_corpus):
    assert build_index(small_corpus, 2, threads=1) == build_index(small_corpus, 2, threads=8)


def test_posting_invariants(small_corpus):
    ix = build_index(small_corpus, 2)
    for _, docs in ix.entries():
        assert docs == sorted(set(docs))
    assert ix.n_postings == int(ix.doc_sizes.sum()) == int(ix.posting_lengths().sum())
    ints = [v for v, _ in ix.entries()]
    assert ints == sorted(set(ints))


def test_build_config_checks():
    a = hash_document(make_document("a", ["x", "y"]), 2)
    with pytest.raises(ConfigMismatchError):
        InvertedIndex.from_hashsets([a], 3)
    with pytest.raises(ValueError):
        InvertedIndex.from_hashsets([a, a], 2)


# -- intersect ----------------------------------------------------------------

def test_intersect_examples(abc_docs):
    a, b, c = abc_docs
    ix = build_index([b, c], 2)
    assert intersect(hash_document(a, 2), ix) == [("B", 1, 3)]
    full = build_index(abc_docs, 2)
    assert ("A", 3, 3) in intersect(hash_document(a, 2), full)
    assert intersect(hash_document(make_document("q", ["x", "y", "z"]), 2), full) == []


def test_intersect_exclude_and_mismatch(abc_docs):
    ix = build_index(abc_docs, 2)
    q = hash_document(abc_docs[0], 2)
    assert [d for d, _, _ in intersect(q, ix, exclude="A")] == ["B"]
    with pytest.raises(ConfigMismatchError):
        intersect(hash_document(abc_docs[0], 3), ix)
    with pytest.raises(ConfigMismatchError):
        intersect(hash_document(abc_docs[0], 2, HASH_FN_CONCAT), ix)


def test_intersect_exclusive():
    # A = {a,b,c} shares ab, ac, bc with B; C = {a,b,y} also holds ab
    docs = [make_document("A", "abc"), make_document("B", "abcx"), make_document("C", "aby")]
    ix = build_index(docs, 2)
    q = hash_document(docs[0], 2)
    assert dict((d, n) for d, n, _ in intersect(q, ix, exclude="A")) == {"B": 3, "C": 1}
    assert dict((d, n) for d, n, _ in intersect(q, ix, exclude="A", exclusive=True)) == {"B": 2}


def test_intersect_empty_index():
    q = hash_document(make_document("q", ["a", "b"]), 2)
    assert intersect(q, InvertedIndex.empty(2)) == []


@pytest.mark.parametrize("k", [1, 2, 3])
def test_intersect_equals_bruteforce(small_corpus, k):
    hashsets = hash_corpus(small_corpus, k)
    ix = InvertedIndex.from_hashsets(hashsets, k)
    plain = {hs.doc_id: set(hs.ints()) for hs in hashsets}
    for hs in hashsets:
        q = plain[hs.doc_id]
        expected = sorted((d, len(q & s), len(s)) for d, s in plain.items() if q & s)
        assert intersect(hs, ix) == expected


def test_lookup_with_shared_prefix():
    # hashes agreeing in the first 8 bytes exercise the full-width fallback
    base = 0xABCDEF0123456789 << 96
    values = [base + 5, base + 9, base + 2**90, (base >> 96 ^ 1) << 96]
    ix = InvertedIndex.from_hashsets([HashSet.from_ints("d", 1, values)], 1)
    for v in values:
        assert ix.postings_of(v) == ["d"]
    for v in (base + 6, base, base + 2**90 + 1):
        assert ix.postings_of(v) == []
    q = HashSet.from_ints("q", 1, [base + 9, base + 7, base + 2**90])
    assert intersect(q, ix) == [("d", 2, 4)]


# -- histogram ----------------------------------------------------------------

def test_histogram_examples():
    single = build_index([make_document("d", ["a", "b", "c"])], 2)
    assert occurrence_histogram(single).ratio_in_1 == 1
    two = build_index([make_document("x", ["a", "b", "c"]), make_document("y", ["a", "b", "d"])], 2)
    h = occurrence_histogram(two)
    assert h.total_hashes == 5 and h.ratio_in_2 == Fraction(1, 5) and h.ratio_in_1 == Fraction(4, 5)
    with pytest.raises(EmptyIndexError):
        occurrence_histogram(InvertedIndex.empty(2))


def test_histogram_bounds(small_corpus):
    for k in (1, 2, 3):
        h = occurrence_histogram(build_index(small_corpus, k))
        assert 0 <= h.ratio_in_1 + h.ratio_in_2 + h.ratio_in_3 <= 1


def test_stats_text(abc_docs):
    info = indexstore.stats(build_index(abc_docs, 2), n_bytes=123)
    assert info["n_hashes"] == 8 and info["n_postings"] == 9
    text = indexstore.stats_text(info)
    assert "distinct hashes 8" in text and "bytes          123" in text
    assert indexstore.stats(InvertedIndex.empty(2))["histogram"]["total_hashes"] == 0


# -- persistence --------------------------------------------------------------

def test_round_trip_empty(tmp_path):
    ix = InvertedIndex.empty(3)
    size = indexstore.persist(ix, tmp_path / "e.idx")
    assert size == (tmp_path / "e.idx").stat().st_size
    assert indexstore.load(tmp_path / "e.idx") == ix


def test_round_trip_random(tmp_path):
    rng = random.Random(1)
    docs = [make_document(f"d{i:03d}", [f"t{x}" for x in rng.sample(range(400), rng.randint(3, 20))])
            for i in range(100)]
    for k in (1, 2, 3):
        ix = build_index(docs, k)
        indexstore.persist(ix, tmp_path / "r.idx")
        back = indexstore.load(tmp_path / "r.idx")
        assert back == ix and _entries(back) == _entries(ix) and back.doc_size_map() == ix.doc_size_map()
        assert back.n_postings == sum(binom(len(d.keys), k) for d in docs)


def test_header_layout(abc_docs):
    ix = build_index(abc_docs, 2)
    raw = indexstore.to_bytes(ix)
    magic, version, k, fn_len = struct.unpack_from(">8sHHH", raw)
    assert (magic, version, k) == (b"PBCINDEX", 1, 2)
    fn = raw[14:14 + fn_len].decode()
    assert fn == ix.hash_fn_id
    n_docs, n_entries, n_postings, body_len, crc = struct.unpack_from(">IQQQI", raw, 14 + fn_len)
    body = raw[14 + fn_len + 32:]
    assert (n_docs, n_entries, n_postings) == (3, 8, 9)
    assert body_len == len(body) and crc == zlib.crc32(body)
    # entries start with the smallest 20-byte key
    assert body[:20] == min(v for v, _ in ix.entries()).to_bytes(20, "big")
    assert indexstore.to_bytes(build_index(list(reversed(abc_docs)), 2)) == raw


def test_corrupt_files(abc_docs, tmp_path):
    raw = indexstore.to_bytes(build_index(abc_docs, 2))
    with pytest.raises(CorruptIndexError):
        indexstore.from_bytes(raw[:-3])
    with pytest.raises(CorruptIndexError):
        indexstore.from_bytes(raw[:10])
    with pytest.raises(CorruptIndexError):
        indexstore.from_bytes(b"NOTINDEX" + raw[8:])
    flipped = bytearray(raw)
    flipped[-5] ^= 0xFF
    with pytest.raises(CorruptIndexError):
        indexstore.from_bytes(bytes(flipped))
    (tmp_path / "t.idx").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CorruptIndexError):
        indexstore.load(tmp_path / "t.idx")


def test_varint_codec_large_values():
    # posting deltas above 2**7, 2**14 and 2**21 take multi-byte varints
    n = 2_100_000
    keys = np.arange(3, dtype=">u8").view(np.uint8).reshape(3, 8)
    key_bytes = np.zeros((3, 20), np.uint8)
    key_bytes[:, 12:] = keys
    offsets = np.array([0, 3, 4, 6])
    postings = np.array([0, 200, n - 1, 5, 16_384, 16_385])
    from privbc import _varint
    enc = _varint.encode_entries(key_bytes, offsets, postings)
    kb, off, post, end, status = _varint.decode_entries(enc, 0, 3, 6)
    assert status == 0 and end == len(enc)
    assert np.array_equal(kb, key_bytes) and np.array_equal(off, offsets) and np.array_equal(post, postings)
    assert _varint.decode_entries(enc[:-1], 0, 3, 6)[4] != 0


# -- copy-on-write updates ----------------------------------------------------

def test_with_hashset_matches_rebuild(small_corpus):
    full = build_index(small_corpus, 2)
    part = build_index(small_corpus[:-10], 2)
    for doc in small_corpus[-10:]:
        part = part.with_hashset(hash_document(doc, 2))
    assert part == full


def test_with_hashset_replaces_existing(abc_docs):
    ix = build_index(abc_docs, 2)
    replaced = ix.with_hashset(hash_document(make_document("A", ["x", "y", "z", "w"]), 2))
    assert replaced.n_docs == 3 and replaced.doc_size_map()["A"] == 6
    assert replaced.n_postings == 12
    assert replaced == build_index([make_document("A", "xyzw"), *abc_docs[1:]], 2)
    assert ix.doc_size_map()["A"] == 3  # old snapshot untouched


def test_without(abc_docs):
    ix = build_index(abc_docs, 2)
    assert ix.without("B") == build_index([abc_docs[0], abc_docs[2]], 2)
    assert ix.without("missing") is ix
    assert ix.without("A").without("B").without("C") == InvertedIndex.empty(2)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("pqrst"), st.sets(st.sampled_from("abcdefgh"), min_size=2, max_size=6)),
                max_size=12))
def test_update_sequence_matches_rebuild(ops):
    ix = InvertedIndex.empty(2)
    live = {}
    for doc_id, refs in ops:
        doc = make_document(doc_id, sorted(refs))
        ix = ix.with_hashset(hash_document(doc, 2))
        live[doc_id] = doc
    assert ix == build_index(list(live.values()), 2)
    assert ix.n_postings == sum(binom(len(d.keys), 2) for d in live.values())


def test_arrays_are_read_only(abc_docs):
    ix = build_index(abc_docs, 2)
    with pytest.raises(ValueError):
        ix.postings[0] = 9


def test_readers_see_whole_snapshots(small_corpus):
    base = build_index(small_corpus[:50], 2)
    extra = [hash_document(d, 2) for d in small_corpus[50:80]]
    snapshots = [base]
    valid = {base.n_postings}
    cur = base
    for hs in extra:
        cur = cur.with_hashset(hs)
        valid.add(cur.n_postings)
    seen, stop = [], threading.Event()

    def reader():
        while not stop.is_set():
            ix = snapshots[-1]
            seen.append(int(ix.doc_sizes.sum()) == ix.n_postings and ix.n_postings in valid)

    t = threading.Thread(target=reader)
    t.start()
    cur = base
    for hs in extra:
        cur = cur.with_hashset(hs)
        snapshots.append(cur)
    stop.set()
    t.join()
    assert seen and all(seen)


# -- storage growth -----------------------------------------------------------

def test_storage_growth_and_per_hash_cost():
    from privbc import synth
    from privbc.ingest import parse_document
    sc = synth.generate(n_docs=300, refs_min=10, refs_max=30, pool_size=20_000, seed=3)
    docs = [parse_document(r) for r in sc.records]
    sizes, per_hash = [], []
    for k in (1, 2, 3):
        ix = build_index(docs, k)
        n = len(indexstore.to_bytes(ix))
        sizes.append(n)
        per_hash.append(n / ix.n_entries)
    assert sizes[0] < sizes[1] < sizes[2]
    assert max(per_hash) <= 1.10 * min(per_hash)
