import json
from fractions import Fraction

import pytest

from privbc import synth
from privbc.ingest import parse_document
from privbc.similarity import bc_strength


def _docs(sc):
    return {d.doc_id: d for d in map(parse_document, sc.records)}


def test_generate_deterministic():
    a = synth.generate(n_docs=50, pool_size=500, n_planted=3, seed=4)
    b = synth.generate(n_docs=50, pool_size=500, n_planted=3, seed=4)
    c = synth.generate(n_docs=50, pool_size=500, n_planted=3, seed=5)
    assert a.records == b.records and a.planted == b.planted
    assert a.records != c.records


def test_generate_shape():
    sc = synth.generate(n_docs=80, refs_min=7, refs_max=12, pool_size=1000, n_planted=4, seed=1)
    docs = _docs(sc)
    assert len(docs) == 80 and sorted(docs) == [f"doc{i:05d}" for i in range(80)]
    assert all(7 <= len(d.keys) <= 12 for d in docs.values())
    assert len(sc.planted) == 4
    planted_ids = [p.source for p in sc.planted] + [p.suspect for p in sc.planted]
    assert len(set(planted_ids)) == 8


def test_planted_overlap_exact():
    sc = synth.generate(n_docs=200, pool_size=5000, n_planted=10, overlap=(5, 8), seed=2)
    docs = _docs(sc)
    for p in sc.planted:
        a, b = docs[p.source].keys, docs[p.suspect].keys
        assert len(a & b) == p.overlap and 5 <= p.overlap <= 8
        # Jaccard in closed form from the known set sizes
        assert bc_strength(a, b) == Fraction(p.overlap, len(a) + len(b) - p.overlap)


def test_surface_variants_normalize_away():
    sc = synth.generate(n_docs=100, pool_size=300, n_planted=0, seed=3)
    raw = {r["title"] for rec in sc.records for r in rec["refs"]}
    keys = {k for d in _docs(sc).values() for k in d.keys}
    assert len(raw) > len(keys)


def test_pool_size_one():
    sc = synth.generate(n_docs=5, refs_min=1, refs_max=4, pool_size=1, n_planted=2, seed=0)
    keys = {frozenset(d.keys) for d in _docs(sc).values()}
    assert len(keys) == 1


def test_generate_rejects_bad_args():
    with pytest.raises(ValueError):
        synth.generate(n_docs=3, n_planted=2)
    with pytest.raises(ValueError):
        synth.generate(refs_min=5, refs_max=4)


def test_write_with_truth(tmp_path):
    sc = synth.generate(n_docs=20, pool_size=200, n_planted=2, seed=9)
    sc.write(tmp_path / "c.jsonl", tmp_path / "truth.json")
    lines = (tmp_path / "c.jsonl").read_text().splitlines()
    assert [json.loads(x) for x in lines] == sc.records
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert [(t["source"], t["suspect"], t["overlap"]) for t in truth] == \
        [(p.source, p.suspect, p.overlap) for p in sc.planted]


def test_collision_fixture_size():
    sc = synth.collision_fixture(seed=0, n_docs=10, refs=8)
    assert len(sc.records) == 10 and all(len(r["refs"]) == 8 for r in sc.records)
