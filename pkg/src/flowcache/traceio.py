"""Binary trace files: recorded per-step predictions plus their schedule.

Layout (all integers little-endian):

    offset 0   magic "PCTR" (4 bytes)
    offset 4   format version, u32, currently 1
    offset 8   element type tag, u32, 1 = float64 little-endian
    offset 12  latent shape (T, H, W, C), four u32
    offset 28  step count N, u32
    offset 32  schedule, (N + 1) float64 values
    then       N records, each: step index u32, t float64, T*H*W*C float64

Records run from step index N - 1 down to 0, matching traversal order from
t = 1 toward the terminal. Write followed by read is a bitwise identity on
the header and every tensor. Malformed input raises TraceError naming the
byte offset of the first violated field, or the expected versus actual byte
count when the file is the wrong length.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ScheduleError, TraceError
from .predictors import TraceArchive, TraceRecord
from .sampler import TimestepSchedule
from .tensor import Tensor4

TRACE_MAGIC = b"PCTR"
TRACE_VERSION = 1
ELEM_TAG_F64_LE = 1

_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")
_U32_MAX = 2**32 - 1

_MAGIC_OFFSET = 0
_VERSION_OFFSET = 4
_ELEM_TAG_OFFSET = 8
_SHAPE_OFFSET = 12
_COUNT_OFFSET = 28
_SCHEDULE_OFFSET = 32


def _expected_size(shape: tuple[int, int, int, int], n_steps: int) -> int:
    cells = shape[0] * shape[1] * shape[2] * shape[3]
    record = _U32.size + _F64.size + cells * 8
    return _SCHEDULE_OFFSET + (n_steps + 1) * 8 + n_steps * record


def trace_bytes(archive: TraceArchive) -> bytes:
    """Serialize an archive to the binary trace format."""
    if not archive.records:
        raise TraceError("archive holds no records")
    shape = archive.records[0].prediction.shape
    n = archive.schedule.n_steps
    for value, what in ((n, "step count"), *((extent, "shape extent") for extent in shape)):
        if value > _U32_MAX:
            raise TraceError(f"{what} {value} does not fit in an unsigned 32-bit field")
    parts = [
        TRACE_MAGIC,
        _U32.pack(TRACE_VERSION),
        _U32.pack(ELEM_TAG_F64_LE),
        struct.pack("<4I", *shape),
        _U32.pack(n),
        np.asarray(archive.schedule.values, dtype="<f8").tobytes(),
    ]
    for rec in archive.records:
        parts.append(_U32.pack(rec.step_index))
        parts.append(_F64.pack(rec.t))
        parts.append(np.ascontiguousarray(rec.prediction.data, dtype="<f8").tobytes())
    return b"".join(parts)


def write_trace(path, archive: TraceArchive) -> None:
    """Write an archive to disk in the binary trace format."""
    data = trace_bytes(archive)
    with open(path, "wb") as handle:
        handle.write(data)


def parse_trace(data: bytes) -> TraceArchive:
    """Decode the binary trace format from bytes."""
    if len(data) < _SCHEDULE_OFFSET:
        raise TraceError(f"expected at least {_SCHEDULE_OFFSET} header bytes, got {len(data)}")
    if data[_MAGIC_OFFSET:_MAGIC_OFFSET + 4] != TRACE_MAGIC:
        raise TraceError(f"bad magic {data[:4]!r} at byte offset {_MAGIC_OFFSET}, expected {TRACE_MAGIC!r}")
    (version,) = _U32.unpack_from(data, _VERSION_OFFSET)
    if version != TRACE_VERSION:
        raise TraceError(f"unsupported format version {version} at byte offset {_VERSION_OFFSET}, expected {TRACE_VERSION}")
    (elem_tag,) = _U32.unpack_from(data, _ELEM_TAG_OFFSET)
    if elem_tag != ELEM_TAG_F64_LE:
        raise TraceError(f"unsupported element type tag {elem_tag} at byte offset {_ELEM_TAG_OFFSET}, expected {ELEM_TAG_F64_LE}")
    shape = struct.unpack_from("<4I", data, _SHAPE_OFFSET)
    for pos, extent in enumerate(shape):
        if extent < 1:
            raise TraceError(f"shape extent {extent} at byte offset {_SHAPE_OFFSET + 4 * pos} must be >= 1")
    (n,) = _U32.unpack_from(data, _COUNT_OFFSET)
    if n < 1:
        raise TraceError(f"step count {n} at byte offset {_COUNT_OFFSET} must be >= 1")
    expected = _expected_size(shape, n)
    if len(data) != expected:
        raise TraceError(f"expected {expected} bytes for shape {shape} and {n} steps, got {len(data)}")

    schedule_values = np.frombuffer(data, dtype="<f8", count=n + 1, offset=_SCHEDULE_OFFSET)
    try:
        schedule = TimestepSchedule(tuple(float(v) for v in schedule_values))
    except ScheduleError as exc:
        raise TraceError(f"embedded schedule at byte offset {_SCHEDULE_OFFSET} is invalid: {exc}") from exc

    cells = shape[0] * shape[1] * shape[2] * shape[3]
    offset = _SCHEDULE_OFFSET + (n + 1) * 8
    records = []
    for _ in range(n):
        (step_index,) = _U32.unpack_from(data, offset)
        (t_value,) = _F64.unpack_from(data, offset + _U32.size)
        values = np.frombuffer(data, dtype="<f8", count=cells, offset=offset + _U32.size + _F64.size)
        prediction = Tensor4(values.reshape(shape).copy())
        records.append(TraceRecord(step_index=step_index, t=t_value, prediction=prediction))
        offset += _U32.size + _F64.size + cells * 8
    return TraceArchive(schedule, tuple(records))


def read_trace(path) -> TraceArchive:
    """Read a binary trace file back into an archive."""
    with open(path, "rb") as handle:
        data = handle.read()
    return parse_trace(data)
