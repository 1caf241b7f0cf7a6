"""Binary timetag files and the truth-level photon sidecar."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError
from .source import ORIGIN_NAMES, PhotonRecords, TimeTagStream

MAGIC = b"PTT1"
VERSION = 1
HEADER = struct.Struct("<4sIHIQQ32s")
TAG_DTYPE = np.dtype("<u8")


def write_timetags(path, stream: TimeTagStream) -> Path:
    path = Path(path)
    tags = stream.tags
    if tags.size and tags[0] < 0:
        raise ValueError("negative timetags cannot be serialised")
    head = HEADER.pack(MAGIC, VERSION, stream.channel, stream.resolution_ps, tags.size,
                       stream.seed & 0xFFFFFFFFFFFFFFFF, bytes(stream.config_hash).ljust(32, b"\0")[:32])
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(tags.astype(TAG_DTYPE, copy=False).tobytes())
    return path


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, channel, res, count, seed, chash = HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    size = Path(path).stat().st_size
    if size != HEADER.size + 8 * count:
        raise FormatError(f"{path}: expected {count} tags, file size {size} disagrees")
    return {"channel": channel, "resolution_ps": res, "count": count, "seed": seed, "config_hash": chash}


def open_tags(path) -> np.ndarray:
    """Memory-mapped view of the tags (no copy)."""
    h = read_header(path)
    if h["count"] == 0:
        return np.zeros(0, dtype=TAG_DTYPE)
    return np.memmap(path, dtype=TAG_DTYPE, mode="r", offset=HEADER.size, shape=(h["count"],))


def read_timetags(path) -> TimeTagStream:
    h = read_header(path)
    tags = np.array(open_tags(path), dtype=np.int64)
    return TimeTagStream(h["channel"], tags, h["seed"], h["config_hash"], 0.0, h["resolution_ps"])


def write_photon_sidecar(path, photons: PhotonRecords) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["emission_time_ps", "pulse_index", "freq_offset_GHz", "origin"])
        t = np.rint(photons.emission_time).astype(np.int64)
        for ti, k, f, o in zip(t.tolist(), photons.pulse_index.tolist(),
                               photons.frequency_offset.tolist(), photons.origin.tolist()):
            w.writerow([ti, k, f"{f:.6f}", ORIGIN_NAMES[o]])
    return path


def read_photon_sidecar(path) -> dict:
    codes = {v: k for k, v in ORIGIN_NAMES.items()}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "emission_time_ps": np.array([int(r["emission_time_ps"]) for r in rows], dtype=np.int64),
        "pulse_index": np.array([int(r["pulse_index"]) for r in rows], dtype=np.int64),
        "freq_offset_GHz": np.array([float(r["freq_offset_GHz"]) for r in rows]),
        "origin": np.array([codes[r["origin"]] for r in rows], dtype=np.int8),
    }
