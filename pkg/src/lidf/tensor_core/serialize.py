"""Container file for model checkpoints and cached feature tensors.

Layout:
    bytes 0..7   magic "LIDF0001"
    next line    ASCII decimal length of the JSON header, then "\\n"
    header       canonical JSON (sorted keys): free-form "meta" dict plus a
                 "tensors" list of {name, shape} in payload order and a
                 SHA-256 of the payload
    payload      the tensors' little-endian float32 bytes, concatenated

The header stays human-readable (strings | less) while the payload stays
compact. Everything is deterministic: same arrays + meta -> same bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..errors import InvalidCheckpointError

MAGIC = b"LIDF0001"


def save_container(path, meta: dict, arrays: Sequence[Tuple[str, np.ndarray]]) -> None:
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in arrays)
    header = {
        "meta": meta,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(b"\n")
        fh.write(str(len(header_bytes)).encode())
        fh.write(b"\n")
        fh.write(header_bytes)
        fh.write(b"\n")
        fh.write(payload)


def load_container(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InvalidCheckpointError(f"cannot read {path}: {exc}") from exc
    if not raw.startswith(MAGIC + b"\n"):
        raise InvalidCheckpointError(f"{path}: bad magic (not a LIDF0001 container)")
    try:
        len_end = raw.index(b"\n", len(MAGIC) + 1)
        header_len = int(raw[len(MAGIC) + 1 : len_end])
        header_start = len_end + 1
        header = json.loads(raw[header_start : header_start + header_len])
        payload = raw[header_start + header_len + 1 :]
    except (ValueError, json.JSONDecodeError) as exc:
        raise InvalidCheckpointError(f"{path}: corrupt header ({exc})") from exc
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise InvalidCheckpointError(f"{path}: payload checksum mismatch")
    tensors: Dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(payload):
            raise InvalidCheckpointError(f"{path}: payload truncated at tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(payload[offset:end], dtype="<f4").reshape(shape).copy()
        offset = end
    return header["meta"], tensors
