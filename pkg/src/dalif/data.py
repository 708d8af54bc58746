"""Input pipelines: IDX image files, EVS1 event streams, and a synthetic sweep task.

All loaders return float64 frames in ``[0, 1]``.  A :class:`Sample` holds a
``[T, C, H, W]`` frame sequence; :func:`stack_batch` turns a list of samples
into the ``[T, B, C, H, W]`` layout the network consumes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .tensor import DTYPE, RngStream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# IDX type code -> big-endian numpy dtype
_IDX_TYPES = {
    0x08: np.dtype("u1"),
    0x09: np.dtype("i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {dt.str.lstrip("<>|="): code for code, dt in _IDX_TYPES.items()}


class IdxFormatError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class EventFormatError(ValueError):
    def __init__(self, message: str, record: int | None = None):
        super().__init__(message if record is None else f"record {record}: {message}")
        self.record = record


@dataclass
class Sample:
    frames: np.ndarray  # [T, C, H, W]
    label: int


def stack_batch(samples) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.frames for s in samples], axis=1)
    y = np.array([s.label for s in samples], dtype=np.int64)
    return x, y


# ---------------------------------------------------------------------------
# IDX

def parse_idx(buf: bytes) -> np.ndarray:
    if len(buf) < 4:
        raise IdxFormatError("file too short for IDX magic", len(buf))
    if buf[0] != 0 or buf[1] != 0:
        raise IdxFormatError(f"bad IDX magic {buf[:4].hex()}", 0)
    code, ndim = buf[2], buf[3]
    if code not in _IDX_TYPES:
        raise IdxFormatError(f"unknown IDX type code 0x{code:02x}", 2)
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise IdxFormatError("truncated IDX dimension header", len(buf))
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    dtype = _IDX_TYPES[code]
    expected = header + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buf) < expected:
        raise IdxFormatError(f"truncated IDX payload: expected {expected} bytes, got {len(buf)}",
                             len(buf))
    if len(buf) > expected:
        raise IdxFormatError(f"trailing bytes after IDX payload", expected)
    return np.frombuffer(buf, dtype=dtype, offset=header).reshape(dims).copy()


def read_idx(path) -> np.ndarray:
    return parse_idx(Path(path).read_bytes())


def encode_idx(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    key = arr.dtype.str.lstrip("<>|=")
    if key not in _IDX_CODES:
        raise ValueError(f"dtype {arr.dtype} has no IDX type code")
    code = _IDX_CODES[key]
    head = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_IDX_TYPES[code]).tobytes()


def write_idx(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_idx(arr))


def _magic(buf: bytes) -> int:
    return struct.unpack(">I", buf[:4])[0] if len(buf) >= 4 else -1


def load_idx(images_path, labels_path) -> list[tuple[np.ndarray, int]]:
    """Load an image/label IDX pair as ``(image [1, H, W] in [0, 1], label)``."""
    img_buf = Path(images_path).read_bytes()
    lab_buf = Path(labels_path).read_bytes()
    if _magic(img_buf) != IDX_IMAGES_MAGIC:
        raise IdxFormatError(f"{images_path}: expected image magic 0x00000803", 0)
    if _magic(lab_buf) != IDX_LABELS_MAGIC:
        raise IdxFormatError(f"{labels_path}: expected label magic 0x00000801", 0)
    images = parse_idx(img_buf)
    labels = parse_idx(lab_buf)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    scaled = images.astype(DTYPE) / 255.0
    return [(scaled[i][None], int(labels[i])) for i in range(images.shape[0])]


def encode_static(image: np.ndarray, T: int) -> np.ndarray:
    """Direct coding: the same analog frame at every timestep."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    image = np.asarray(image, dtype=DTYPE)
    return np.repeat(image[None], T, axis=0)


# ---------------------------------------------------------------------------
# EVS1 event streams

EVS_MAGIC = b"EVS1"
_EVS_HEADER = struct.Struct("<4sHHI")
EVENT_DTYPE = np.dtype([("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "u1")])


class EventRecord(NamedTuple):
    t: int
    x: int
    y: int
    polarity: int


@dataclass
class EventFile:
    width: int
    height: int
    events: list[EventRecord]


def encode_events(events, width: int, height: int) -> bytes:
    rec = np.zeros(len(events), dtype=EVENT_DTYPE)
    for i, e in enumerate(events):
        rec[i] = (e.t, e.x, e.y, e.polarity, 0)
    return _EVS_HEADER.pack(EVS_MAGIC, width, height, len(events)) + rec.tobytes()


def write_events(path, events, width: int, height: int) -> None:
    Path(path).write_bytes(encode_events(events, width, height))


def parse_events(buf: bytes) -> EventFile:
    if len(buf) < _EVS_HEADER.size:
        raise EventFormatError(f"file too short for EVS1 header ({len(buf)} bytes)")
    magic, width, height, count = _EVS_HEADER.unpack_from(buf)
    if magic != EVS_MAGIC:
        raise EventFormatError(f"bad magic {magic!r}, expected {EVS_MAGIC!r}")
    body = len(buf) - _EVS_HEADER.size
    if body != count * EVENT_DTYPE.itemsize:
        got = body // EVENT_DTYPE.itemsize
        raise EventFormatError(f"header declares {count} records, payload holds {got}",
                               record=min(got, count))
    rec = np.frombuffer(buf, dtype=EVENT_DTYPE, count=count, offset=_EVS_HEADER.size)
    bad = np.flatnonzero((rec["x"] >= width) | (rec["y"] >= height))
    if bad.size:
        i = int(bad[0])
        raise EventFormatError(
            f"coordinate ({rec['x'][i]}, {rec['y'][i]}) outside {width}x{height}", record=i)
    bad = np.flatnonzero(rec["p"] > 1)
    if bad.size:
        raise EventFormatError(f"polarity {rec['p'][bad[0]]} not in {{0, 1}}", record=int(bad[0]))
    bad = np.flatnonzero(np.diff(rec["t"].astype(np.int64)) < 0)
    if bad.size:
        raise EventFormatError("timestamps decrease", record=int(bad[0]) + 1)
    events = [EventRecord(int(t), int(x), int(y), int(p))
              for t, x, y, p in zip(rec["t"], rec["x"], rec["y"], rec["p"])]
    return EventFile(width, height, events)


def load_event_file(path) -> EventFile:
    return parse_events(Path(path).read_bytes())


def load_events(path) -> list[EventRecord]:
    return load_event_file(path).events


def bin_event_counts(events, T: int, width: int, height: int, duration_us: float) -> np.ndarray:
    """Unclipped per-bin event counts, ``[T, 2, H, W]``."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not duration_us > 0:
        raise ValueError(f"duration_us must be positive, got {duration_us}")
    counts = np.zeros((T, 2, height, width), dtype=DTYPE)
    if len(events) == 0:
        return counts
    arr = np.array([(e.t, e.x, e.y, e.polarity) for e in events], dtype=np.int64)
    if float(duration_us).is_integer():
        bins = (arr[:, 0] * T) // int(duration_us)
    else:
        bins = np.floor(arr[:, 0] * T / duration_us).astype(np.int64)
    bins = np.minimum(bins, T - 1)
    np.add.at(counts, (bins, arr[:, 3], arr[:, 2], arr[:, 1]), 1.0)
    return counts


def bin_events(events, T: int, width: int, height: int, duration_us: float) -> np.ndarray:
    """Frame accumulation into T bins, channel = polarity, counts clipped to 1."""
    return np.minimum(bin_event_counts(events, T, width, height, duration_us), 1.0)


# ---------------------------------------------------------------------------
# synthetic task

SYNTH_SIZE = 8


def sweep_column(label: int, t: int) -> int:
    c = t % SYNTH_SIZE
    return c if label == 0 else SYNTH_SIZE - 1 - c


def synth_task(seed: int, n_samples: int, T: int, noise: float) -> list[Sample]:
    """Two-class moving-dot task on an 8x8 grid.

    Class 0 sweeps a bright pixel left to right (column ``t mod 8``), class 1
    right to left (column ``7 - t mod 8``), along a row drawn per sample.
    Every pixel is then flipped independently with probability ``noise``.
    Over a full sweep both classes visit the same set of frames, so only the
    order of frames carries the label.  Classes are balanced exactly.
    """
    if T < 4:
        raise ValueError(f"synthetic task needs T >= 4, got {T}")
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise must be in [0, 1], got {noise}")
    rng = RngStream(seed)
    labels = np.arange(n_samples) % 2
    labels = labels[rng.permutation(n_samples)]
    rows = rng.integers(0, SYNTH_SIZE, n_samples)
    flips = rng.random((n_samples, T, 1, SYNTH_SIZE, SYNTH_SIZE)) < noise
    samples = []
    for i in range(n_samples):
        frames = np.zeros((T, 1, SYNTH_SIZE, SYNTH_SIZE), dtype=DTYPE)
        for t in range(T):
            frames[t, 0, rows[i], sweep_column(int(labels[i]), t)] = 1.0
        frames[flips[i]] = 1.0 - frames[flips[i]]
        samples.append(Sample(frames, int(labels[i])))
    return samples
