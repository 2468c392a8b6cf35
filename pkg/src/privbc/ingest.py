"""Corpus ingestion.

Native format is newline-delimited JSON, one document per line::

    {"id": "d1", "refs": [{"title": "...", "authors": ["..."], "year": 2019}, ...]}

A TEI reader converts GROBID-style XML (one file per document) into the same
records by pulling the title out of each ``biblStruct`` in the bibliography.
"""

from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import EmptyKeyError, MalformedRecordError
from .refmodel import DEFAULT_MAX_REFS, Corpus, Document, Reference, dedup_references, eligible

log = logging.getLogger(__name__)

TEI_NS = "{http://www.tei-c.org/ns/1.0}"


@dataclass(frozen=True)
class CorpusStats:
    n_docs_loaded: int = 0
    n_docs_excluded: int = 0
    n_unique_refs: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "n_docs_loaded": self.n_docs_loaded,
            "n_docs_excluded": self.n_docs_excluded,
            "n_unique_refs": self.n_unique_refs,
        }


def parse_document(record: dict[str, Any] | str, line: int | None = None) -> Document:
    """Build a normalized, deduplicated Document from one corpus record."""
    if isinstance(record, str):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise MalformedRecordError(f"invalid JSON: {exc.msg}", line) from None
    if not isinstance(record, dict):
        raise MalformedRecordError("record is not a JSON object", line)

    doc_id = record.get("id")
    if not isinstance(doc_id, str) or not doc_id:
        raise MalformedRecordError("missing or empty 'id'", line)
    raw_refs = record.get("refs")
    if not isinstance(raw_refs, list) or not raw_refs:
        raise MalformedRecordError(f"document {doc_id!r} has no 'refs' array", line)

    refs = []
    for entry in raw_refs:
        if isinstance(entry, str):
            entry = {"title": entry}
        if not isinstance(entry, dict) or not isinstance(entry.get("title"), str):
            raise MalformedRecordError(f"document {doc_id!r}: reference without a 'title'", line)
        refs.append(Reference.from_title(entry["title"], entry.get("authors") or (), entry.get("year")))
    return Document(doc_id, dedup_references(refs))


def iter_records(path: str | Path) -> Iterator[tuple[int, str]]:
    """Yield (line number, text) for every non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if text.strip():
                yield lineno, text


def load_corpus(path: str | Path, k: int, max_refs: int = DEFAULT_MAX_REFS) -> tuple[Corpus, CorpusStats]:
    """Load a line-format corpus, keeping only documents with k <= |refs| <= max_refs.

    Documents whose references cannot be normalized (empty titles) are
    counted as excluded. Malformed JSON or missing ids are fatal.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    docs: list[Document] = []
    excluded = 0
    seen_ids: set[str] = set()
    for lineno, text in iter_records(path):
        try:
            doc = parse_document(text, line=lineno)
        except EmptyKeyError as exc:
            log.warning("line %d: excluded, unusable reference title %r", lineno, exc.raw)
            excluded += 1
            continue
        if doc.doc_id in seen_ids:
            raise MalformedRecordError(f"duplicate document id {doc.doc_id!r}", lineno)
        seen_ids.add(doc.doc_id)
        if eligible(doc, k, max_refs):
            docs.append(doc)
        else:
            excluded += 1
    unique = {r.norm_key for d in docs for r in d.refs}
    stats = CorpusStats(len(docs), excluded, len(unique))
    return Corpus(docs, k, max_refs), stats


def document_record(doc_id: str, titles: Iterable[str]) -> dict[str, Any]:
    return {"id": doc_id, "refs": [{"title": t} for t in titles]}


def write_records(records: Iterable[dict[str, Any]], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
            n += 1
    return n


def write_corpus(corpus: Corpus, path: str | Path) -> int:
    """Serialize documents back to the line format (normalized keys sorted)."""
    def records():
        for doc in corpus.documents:
            refs = sorted(doc.refs, key=lambda r: r.norm_key)
            out = []
            for r in refs:
                entry: dict[str, Any] = {"title": r.raw_title or r.norm_key}
                if r.authors:
                    entry["authors"] = list(r.authors)
                if r.year is not None:
                    entry["year"] = r.year
                out.append(entry)
            yield {"id": doc.doc_id, "refs": out}

    return write_records(records(), path)


# -- TEI subset -------------------------------------------------------------

@dataclass
class TEIResult:
    records: list[dict[str, Any]]
    skipped_untitled: int = 0


def _text(el: ET.Element | None) -> str:
    return "".join(el.itertext()).strip() if el is not None else ""


def _tag(el: ET.Element) -> str:
    return el.tag.split("}", 1)[-1]


def _find_child(el: ET.Element, name: str) -> ET.Element | None:
    for child in el:
        if _tag(child) == name:
            return child
    return None


def parse_tei(source: str | Path | bytes, doc_id: str | None = None) -> tuple[dict[str, Any] | None, int]:
    """Extract a corpus record from one TEI document.

    Only ``biblStruct`` entries under a ``listBibl`` count, so the document's
    own header is ignored. Titles come from ``analytic/title`` when present,
    otherwise ``monogr/title``. Returns (record or None, untitled entries
    skipped). The document id defaults to the file stem.
    """
    if isinstance(source, bytes):
        root = ET.fromstring(source)
    else:
        root = ET.parse(source).getroot()
        if doc_id is None:
            doc_id = Path(source).stem
    if doc_id is None:
        raise MalformedRecordError("TEI input needs a document id")

    refs: list[dict[str, Any]] = []
    skipped = 0
    for bibl in _bibliography_entries(root):
        title = ""
        for part in ("analytic", "monogr"):
            container = _find_child(bibl, part)
            if container is not None:
                title = _text(_find_child(container, "title"))
                if title:
                    break
        if not title:
            skipped += 1
            continue
        entry: dict[str, Any] = {"title": title}
        authors = [_text(_find_child(p, "surname")) for p in bibl.iter(f"{TEI_NS}persName")]
        if any(authors):
            entry["authors"] = [a for a in authors if a]
        for date in bibl.iter(f"{TEI_NS}date"):
            when = date.get("when", "")
            if when[:4].isdigit():
                entry["year"] = int(when[:4])
                break
        refs.append(entry)

    if skipped:
        log.warning("%s: skipped %d bibliography entries without a title", doc_id, skipped)
    if not refs:
        return None, skipped
    return {"id": doc_id, "refs": refs}, skipped


def _bibliography_entries(root: ET.Element) -> Iterator[ET.Element]:
    seen: set[int] = set()
    for lb in root.iter():
        if _tag(lb) != "listBibl":
            continue
        for el in lb.iter():
            if _tag(el) == "biblStruct" and id(el) not in seen:
                seen.add(id(el))
                yield el


def convert_tei(paths: Iterable[str | Path]) -> TEIResult:
    """Convert TEI files (one per document) to line-format records, sorted by id."""
    result = TEIResult(records=[])
    for path in paths:
        record, skipped = parse_tei(path)
        result.skipped_untitled += skipped
        if record is not None:
            result.records.append(record)
    result.records.sort(key=lambda r: r["id"])
    return result


def tei_paths(path: str | Path) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        return sorted(q for q in p.iterdir() if q.suffix.lower() in (".xml", ".tei"))
    return [p]
