"""Instance files and result tables.

An instance file is one line of JSON (the header, keys sorted) followed by a
binary payload: the truth array then the observation array, little-endian, C
order.  The header records the format version, the grid, the channel, the
seed, array dtypes and shapes, and the SHA-256 of the payload.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .channels import Instance, TruthMode, channel_from_dict
from .grid import build_grid

FORMAT_NAME = "gridsync-instance"
FORMAT_VERSION = 1


class IntegrityError(ValueError):
    """Payload checksum mismatch or truncated file."""


class VersionError(ValueError):
    """Instance file written by an incompatible format version."""


def _le(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    return a.astype(a.dtype.newbyteorder("<"), copy=False)


def instance_bytes(inst: Instance) -> bytes:
    truth = _le(inst.truth)
    obs = _le(inst.obs)
    payload = truth.tobytes() + obs.tobytes()
    g = inst.graph
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "dims": g.dims,
        "extents": [int(L) for L in g.extents],
        "boundary": g.boundary.value,
        "variant": inst.variant.value,
        "m": inst.m,
        "channel": inst.channel.describe(),
        "seed": int(inst.seed),
        "truth_mode": TruthMode(inst.truth_mode).value,
        "truth": {"dtype": truth.dtype.str, "shape": list(truth.shape)},
        "obs": {"dtype": obs.dtype.str, "shape": list(obs.shape)},
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    return line + payload


def save_instance(inst: Instance, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(instance_bytes(inst))
    return path


def instance_from_bytes(blob: bytes) -> Instance:
    nl = blob.find(b"\n")
    if nl < 0:
        raise IntegrityError("missing instance header")
    try:
        header = json.loads(blob[:nl])
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"unreadable instance header: {exc}") from None
    if header.get("format") != FORMAT_NAME:
        raise IntegrityError(f"not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise VersionError(f"instance format version {header.get('version')} is not supported (expected {FORMAT_VERSION})")
    payload = blob[nl + 1 :]
    if len(payload) != header["payload_bytes"]:
        raise IntegrityError(f"payload has {len(payload)} bytes, header says {header['payload_bytes']}")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise IntegrityError("payload checksum mismatch")
    arrays = []
    offset = 0
    for key in ("truth", "obs"):
        dt = np.dtype(header[key]["dtype"])
        shape = tuple(header[key]["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        a = np.frombuffer(payload, dtype=dt, count=count, offset=offset).reshape(shape)
        arrays.append(a.astype(dt.newbyteorder("="), copy=True))
        offset += count * dt.itemsize
    g = build_grid(header["dims"], header["extents"], header["boundary"])
    return Instance(
        graph=g,
        channel=channel_from_dict(header["channel"]),
        truth=arrays[0],
        obs=arrays[1],
        seed=int(header["seed"]),
        truth_mode=TruthMode(header["truth_mode"]),
    )


def load_instance(path) -> Instance:
    return instance_from_bytes(Path(path).read_bytes())


# -- result tables -------------------------------------------------------------

def _cell(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _columns(rows: Sequence[dict]) -> List[str]:
    cols: List[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def format_rows(rows: Sequence[dict], fmt: str) -> str:
    """Serialize rows deterministically as CSV or JSON lines."""
    rows = [{k: _cell(v) for k, v in r.items()} for r in rows]
    if fmt == "jsonl":
        return "".join(json.dumps(r, sort_keys=False, allow_nan=True) + "\n" for r in rows)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=_columns(rows), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()
    raise ValueError(f"unknown output format {fmt!r} (expected 'csv' or 'jsonl')")


def read_rows(path) -> List[dict]:
    """Read a result table written by :func:`format_rows` (values stay strings for CSV)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".jsonl":
        return [json.loads(line) for line in text.splitlines() if line]
    return list(csv.DictReader(io.StringIO(text)))


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_table(rows: Iterable[dict], path, fmt: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_rows(list(rows), fmt))
    return path
