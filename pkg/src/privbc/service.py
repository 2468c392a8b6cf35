"""Detection service that only ever sees subset hashes.

Clients hash their documents locally and send ``{doc_id, k, hash_fn_id,
hashes}``; the request schema has no room for titles or any other
bibliographic field, and unknown fields are rejected.

Endpoints: ``POST /submit``, ``POST /query[?mode=pair-exclusive]``, ``GET /stats``.
"""

from __future__ import annotations

import json
import logging
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Annotated, Any
from urllib.parse import parse_qs, urlsplit

from pydantic import BaseModel, ConfigDict, Field, StringConstraints, ValidationError

from . import indexstore
from .errors import ConfigMismatchError
from .indexstore import InvertedIndex, intersect
from .psihash import HASH_FN_SUM, HashSet
from .similarity import PairResult, rank_candidates, render_decimal

log = logging.getLogger(__name__)

HexHash = Annotated[str, StringConstraints(pattern=r"^[0-9a-fA-F]{40}$")]
MODES = ("raw", "pair-exclusive")


class SubmitRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)

    doc_id: Annotated[str, StringConstraints(min_length=1, max_length=512)]
    k: Annotated[int, Field(ge=1)]
    hash_fn_id: str
    hashes: Annotated[list[HexHash], Field(min_length=1)]

    def to_hashset(self) -> HashSet:
        return HashSet.from_hex(self.doc_id, self.k, self.hashes, self.hash_fn_id)


def candidate_records(results: list[PairResult]) -> list[dict[str, Any]]:
    return [
        {
            "doc_id": r.doc_id_b,
            "intersection": r.intersection_hashes,
            "s_pbc": render_decimal(r.s_pbc),
            "s_bc_recovered": render_decimal(r.s_bc_recovered),
        }
        for r in results
    ]


def request_body(hs: HashSet) -> dict[str, Any]:
    """Wire body for a locally computed hash set."""
    return {"doc_id": hs.doc_id, "k": hs.k, "hash_fn_id": hs.hash_fn_id, "hashes": hs.hex()}


class DetectionService:
    """Single-index service. Writers serialize on a lock and publish a new
    snapshot; readers use whichever snapshot was current when they started."""

    def __init__(self, k: int, hash_fn_id: str = HASH_FN_SUM, index_path: str | Path | None = None):
        self.k = k
        self.hash_fn_id = hash_fn_id
        self.index_path = Path(index_path) if index_path else None
        self._write_lock = threading.Lock()
        if self.index_path is not None and self.index_path.exists():
            index = indexstore.load(self.index_path)
            if (index.k, index.hash_fn_id) != (k, hash_fn_id):
                raise ConfigMismatchError(f"index file has k={index.k}/{index.hash_fn_id}, "
                                          f"service configured for k={k}/{hash_fn_id}")
        else:
            index = InvertedIndex.empty(k, hash_fn_id)
        self._index = index

    @property
    def index(self) -> InvertedIndex:
        return self._index

    def _check(self, req: SubmitRequest) -> None:
        if req.k != self.k:
            raise ConfigMismatchError(f"request k={req.k}, service k={self.k}")
        if req.hash_fn_id != self.hash_fn_id:
            raise ConfigMismatchError(f"request hash {req.hash_fn_id!r}, service hash {self.hash_fn_id!r}")

    def handle_submit(self, req: SubmitRequest) -> dict[str, Any]:
        self._check(req)
        hs = req.to_hashset()
        with self._write_lock:
            new = self._index.with_hashset(hs)
            if self.index_path is not None:
                indexstore.persist(new, self.index_path)
            self._index = new
        return {"doc_id": req.doc_id, "n_docs": new.n_docs, "n_hashes": len(hs)}

    def handle_query(self, req: SubmitRequest, mode: str = "raw", exclude_self: bool = False) -> dict[str, Any]:
        self._check(req)
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        index = self._index
        query = req.to_hashset()
        exclusive = mode == "pair-exclusive"
        # the query is always one side of the pair, so its own entry never counts against exclusivity
        counts = intersect(query, index, exclude=req.doc_id if exclude_self or exclusive else None,
                           exclusive=exclusive)
        return {"index_k": index.k, "candidates": candidate_records(rank_candidates(query, counts))}

    def handle_stats(self) -> dict[str, Any]:
        return indexstore.stats(self._index)


class _Handler(BaseHTTPRequestHandler):
    service: DetectionService
    server_version = "privbc/0.1"

    def log_message(self, fmt: str, *args: Any) -> None:
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status: int, payload: dict[str, Any]) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        if urlsplit(self.path).path == "/stats":
            self._send(HTTPStatus.OK, self.service.handle_stats())
        else:
            self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})

    def do_POST(self) -> None:
        url = urlsplit(self.path)
        if url.path not in ("/submit", "/query"):
            self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        try:
            data = json.loads(self.rfile.read(length) or b"null")
        except (json.JSONDecodeError, UnicodeDecodeError):
            self._send(HTTPStatus.BAD_REQUEST, {"error": "body is not valid JSON"})
            return
        try:
            req = SubmitRequest.model_validate(data)
        except ValidationError as exc:
            errors = [{"loc": list(e["loc"]), "msg": e["msg"]} for e in exc.errors()]
            self._send(HTTPStatus.UNPROCESSABLE_ENTITY, {"error": "schema violation", "details": errors})
            return
        params = parse_qs(url.query)
        try:
            if url.path == "/submit":
                self._send(HTTPStatus.OK, self.service.handle_submit(req))
            else:
                mode = params.get("mode", ["raw"])[0]
                exclude = params.get("exclude_self", ["0"])[0] in ("1", "true")
                self._send(HTTPStatus.OK, self.service.handle_query(req, mode, exclude))
        except ConfigMismatchError as exc:
            self._send(HTTPStatus.CONFLICT, {"error": str(exc)})
        except ValueError as exc:
            self._send(HTTPStatus.BAD_REQUEST, {"error": str(exc)})


def make_server(service: DetectionService, host: str = "127.0.0.1", port: int = 8750) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve(service: DetectionService, host: str = "127.0.0.1", port: int = 8750) -> None:
    server = make_server(service, host, port)
    log.info("serving k=%d %s on http://%s:%d", service.k, service.hash_fn_id, host, server.server_address[1])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
