"""Versioned container for numeric models (MoE networks, PCA galleries).

Layout (ASCII header lines, each ending in ``\\n``; array payloads are raw
little-endian, row-major)::

    GHCI-MODEL 1
    kind <kind>
    meta <key> <value>            (zero or more; value runs to end of line)
    array <name> <f8|i8> <ndim> <d0> ... <dk-1>
    <prod(dims) * 8 bytes>
    ...
    end
"""
from __future__ import annotations

import io
import os

import numpy as np

MAGIC = b"GHCI-MODEL 1"
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


class ModelFormatError(ValueError):
    pass


def dumps(kind: str, arrays: dict, meta: dict | None = None) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC + b"\n")
    out.write(f"kind {kind}\n".encode())
    for k, v in (meta or {}).items():
        out.write(f"meta {k} {v}\n".encode())
    for name, arr in arrays.items():
        a = np.asarray(arr)
        code = "i8" if np.issubdtype(a.dtype, np.integer) else "f8"
        a = np.ascontiguousarray(a, dtype=_DTYPES[code])
        dims = " ".join(str(d) for d in a.shape)
        out.write(f"array {name} {code} {a.ndim} {dims}".rstrip().encode() + b"\n")
        out.write(a.tobytes())
    out.write(b"end\n")
    return out.getvalue()


def loads(data: bytes) -> tuple[str, dict, dict]:
    """Returns ``(kind, arrays, meta)``."""
    buf = io.BytesIO(data)

    def line():
        raw = buf.readline()
        if not raw.endswith(b"\n"):
            raise ModelFormatError(f"unexpected end of model data at byte {buf.tell()}")
        return raw[:-1].decode("ascii", errors="replace")

    if buf.readline().rstrip(b"\n") != MAGIC:
        raise ModelFormatError("not a gesturehci model file (bad magic or version)")
    first = line().split(" ", 1)
    if first[0] != "kind" or len(first) != 2:
        raise ModelFormatError("missing 'kind' line")
    kind = first[1]
    arrays, meta = {}, {}
    while True:
        ln = line()
        if ln == "end":
            break
        tok = ln.split(" ")
        if tok[0] == "meta" and len(tok) >= 2:
            meta[tok[1]] = " ".join(tok[2:])
        elif tok[0] == "array" and len(tok) >= 4:
            name, code, ndim = tok[1], tok[2], int(tok[3])
            if code not in _DTYPES or len(tok) != 4 + ndim:
                raise ModelFormatError(f"bad array header {ln!r}")
            shape = tuple(int(t) for t in tok[4:])
            nbytes = int(np.prod(shape, dtype=np.int64)) * 8
            payload = buf.read(nbytes)
            if len(payload) != nbytes:
                raise ModelFormatError(f"array {name!r} truncated")
            arrays[name] = np.frombuffer(payload, dtype=_DTYPES[code]).reshape(shape).copy()
        else:
            raise ModelFormatError(f"unrecognised header line {ln!r}")
    return kind, arrays, meta


def save(path: str | os.PathLike, kind: str, arrays: dict, meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(kind, arrays, meta))


def load(path: str | os.PathLike, expect_kind: str | None = None) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        kind, arrays, meta = loads(fh.read())
    if expect_kind is not None and kind != expect_kind:
        raise ModelFormatError(f"{path}: expected a {expect_kind!r} model, found {kind!r}")
    return arrays, meta
