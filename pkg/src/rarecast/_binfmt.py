"""Header-plus-payload binary container shared by trajectories and model snapshots.

Layout: one line of UTF-8 JSON terminated by ``\\n``, followed by raw
little-endian sections.  The header's ``sections`` list records name, dtype,
shape and byte offset (relative to the end of the header line) of every array.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = "rarecast-bin"


def write(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    sections = []
    offset = 0
    payload = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        blob = np.ascontiguousarray(arr, dtype=dt).tobytes(order="C")
        sections.append(
            {"name": name, "dtype": dt.str, "shape": list(arr.shape), "offset": offset}
        )
        payload.append(blob)
        offset += len(blob)
    head = dict(header)
    head["format"] = MAGIC
    head["sections"] = sections
    line = json.dumps(head, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with open(Path(path), "wb") as fh:
        fh.write(line)
        for blob in payload:
            fh.write(blob)


def read(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    end = raw.find(b"\n")
    if end < 0:
        raise ValueError(f"{path}: missing header line")
    header = json.loads(raw[:end].decode())
    if header.get("format") != MAGIC:
        raise ValueError(f"{path}: not a {MAGIC} file")
    body = memoryview(raw)[end + 1 :]
    arrays = {}
    for sec in header["sections"]:
        dt = np.dtype(sec["dtype"])
        count = int(np.prod(sec["shape"], dtype=np.int64))
        arr = np.frombuffer(body, dtype=dt, count=count, offset=sec["offset"])
        arrays[sec["name"]] = arr.reshape(sec["shape"]).astype(dt.newbyteorder("="))
    return header, arrays
