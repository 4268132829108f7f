"""Binary model checkpoints.

Layout (all integers little-endian):

    bytes 0-3   magic b"TRDC"
    u32         format version (currently 1)
    u64         metadata length, then that many bytes of UTF-8 JSON
    u32         number of arrays
    per array, in lexicographic name order:
        u32     name length, then the name in UTF-8
        u32     ndim
        u64*ndim shape
        f64*count row-major array data

The metadata JSON records the operator spec and both vocabularies, so an
evaluator can refuse a checkpoint whose vocabulary does not match the
dataset it is pointed at.  Writing is deterministic: the same params give
the same bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .autodiff import Array
from .errors import DataError
from .operators import TernaryOpSpec

MAGIC = b"TRDC"
VERSION = 1


def save_checkpoint(path: str, spec: TernaryOpSpec, params: dict[str, Array],
                    entity_names: tuple[str, ...],
                    relation_names: tuple[str, ...]) -> None:
    meta = {
        "op": {"kind": spec.kind, "dim": spec.dim,
               "nonlinearity": spec.nonlinearity, "cp_rank": spec.cp_rank},
        "entity_names": list(entity_names),
        "relation_names": list(relation_names),
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path: str) -> tuple[TernaryOpSpec, dict[str, Array],
                                        tuple[str, ...], tuple[str, ...]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise DataError(f"{path} is not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<Q", view, 8)
    off = 16
    meta = json.loads(bytes(view[off:off + meta_len]).decode("utf-8"))
    off += meta_len
    (n_arrays,) = struct.unpack_from("<I", view, off)
    off += 4
    params: dict[str, Array] = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack_from("<I", view, off)
        off += 4
        name = bytes(view[off:off + name_len]).decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", view, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", view, off)
        off += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(view, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        params[name] = arr.astype(np.float64).copy()
    if off != len(blob):
        raise DataError(f"{path} has {len(blob) - off} trailing bytes")
    op = meta["op"]
    spec = TernaryOpSpec(kind=op["kind"], dim=op["dim"],
                         nonlinearity=op["nonlinearity"], cp_rank=op["cp_rank"])
    return (spec, params,
            tuple(meta["entity_names"]), tuple(meta["relation_names"]))
