"""LEB128 codec for the index entry stream (hash, count, delta-encoded doc ordinals)."""

from __future__ import annotations

import numba
import numpy as np

KEY_BYTES = 20


@numba.njit(cache=True, inline="always")
def _varint_len(v):
    n = 1
    while v >= 128:
        v >>= 7
        n += 1
    return n


@numba.njit(cache=True, inline="always")
def _put(out, pos, v):
    while v >= 128:
        out[pos] = (v & 127) | 128
        v >>= 7
        pos += 1
    out[pos] = v
    return pos + 1


@numba.njit(cache=True)
def encode_entries(keys, offsets, postings):
    """keys: (M, 20) uint8; offsets: (M+1,) int64; postings: (P,) int64 ordinals."""
    m = keys.shape[0]
    size = 0
    for i in range(m):
        size += KEY_BYTES + _varint_len(offsets[i + 1] - offsets[i])
        prev = 0
        for j in range(offsets[i], offsets[i + 1]):
            size += _varint_len(postings[j] - prev)
            prev = postings[j]
    out = np.empty(size, dtype=np.uint8)
    pos = 0
    for i in range(m):
        for b in range(KEY_BYTES):
            out[pos + b] = keys[i, b]
        pos += KEY_BYTES
        pos = _put(out, pos, offsets[i + 1] - offsets[i])
        prev = 0
        for j in range(offsets[i], offsets[i + 1]):
            pos = _put(out, pos, postings[j] - prev)
            prev = postings[j]
    return out


@numba.njit(cache=True)
def _get(data, pos):
    """Returns (value, new position); position -1 on truncation or overlong varint."""
    v = 0
    shift = 0
    n = data.shape[0]
    while True:
        if pos >= n or shift > 56:
            return 0, -1
        b = data[pos]
        pos += 1
        v |= (b & 127) << shift
        if b < 128:
            return v, pos
        shift += 7


@numba.njit(cache=True)
def decode_entries(data, start, n_entries, n_postings):
    """Inverse of encode_entries. Returns (keys, offsets, postings, end, status).

    status 0 = ok, 1 = truncated, 2 = posting total mismatch, 3 = ordinals not ascending.
    """
    keys = np.empty((n_entries, KEY_BYTES), dtype=np.uint8)
    offsets = np.zeros(n_entries + 1, dtype=np.int64)
    postings = np.empty(n_postings, dtype=np.int64)
    pos = start
    p = 0
    n = data.shape[0]
    for i in range(n_entries):
        if pos + KEY_BYTES > n:
            return keys, offsets, postings, pos, 1
        for b in range(KEY_BYTES):
            keys[i, b] = data[pos + b]
        pos += KEY_BYTES
        count, pos = _get(data, pos)
        if pos < 0:
            return keys, offsets, postings, pos, 1
        if p + count > n_postings:
            return keys, offsets, postings, pos, 2
        prev = 0
        for j in range(count):
            delta, pos = _get(data, pos)
            if pos < 0:
                return keys, offsets, postings, pos, 1
            if j > 0 and delta == 0:
                return keys, offsets, postings, pos, 3
            prev += delta
            postings[p] = prev
            p += 1
        offsets[i + 1] = p
    if p != n_postings:
        return keys, offsets, postings, pos, 2
    return keys, offsets, postings, pos, 0
