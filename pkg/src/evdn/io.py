"""Text and binary event file formats.

Text format (UTF-8)::

    # comments start with '#'
    346,260          <- header: width,height
    1000,10,20,1     <- t,x,y,p with p in {0,1}

Binary "EVT1" format, little-endian: magic ``b"EVT1"``, width u16, height
u16, count u64, then ``count`` packed records of (t u64, x u16, y u16, p i8).
"""
from __future__ import annotations

import io
import logging
import struct
from pathlib import Path

import numpy as np

from .core import EventPacket, SensorGeometry, sort_stable, validate_packet

logger = logging.getLogger(__name__)

MAGIC = b"EVT1"
_HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])


class EventFormatError(ValueError):
    pass


class EventParseError(EventFormatError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TruncationError(EventFormatError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"truncated payload: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


def _as_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    return source.read()


def read_events_text(source, strict: bool = True) -> EventPacket:
    """Parse the text format from a binary stream (or bytes).

    Out-of-order timestamps are re-sorted stably; the number of inversions
    found is stored in ``packet.meta["resorted"]``. With ``strict=False`` the
    events are returned as read, unsorted and unvalidated.
    """
    text = _as_bytes(source).decode("utf-8")
    geometry = None
    rows = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if geometry is None:
            try:
                if len(fields) != 2:
                    raise ValueError
                geometry = SensorGeometry(int(fields[0]), int(fields[1]))
            except ValueError:
                raise EventFormatError(f"missing or malformed 'width,height' header at line {line_no}") from None
            continue
        if len(fields) != 4:
            raise EventParseError(line_no, f"expected 4 fields 't,x,y,p', got {len(fields)}")
        try:
            t, x, y, p = (int(f) for f in fields)
        except ValueError:
            raise EventParseError(line_no, f"malformed event {line!r}") from None
        if p not in (0, 1):
            raise EventParseError(line_no, f"polarity out of range: {p}")
        rows.append((t, x, y, 1 if p else -1))
    if geometry is None:
        raise EventFormatError("missing 'width,height' header")

    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    packet = EventPacket(geometry, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
    return _finish(packet) if strict else packet


def _finish(packet: EventPacket) -> EventPacket:
    inversions = int(np.count_nonzero(np.diff(packet.t) < 0)) if len(packet) > 1 else 0
    if inversions:
        logger.warning("re-sorted %d out-of-order timestamps", inversions)
        packet = sort_stable(packet).with_meta(resorted=inversions)
    report = validate_packet(packet)
    if not report.ok:
        raise EventFormatError(f"invalid events: {report.violations[0]}")
    return packet


def write_events_text(packet: EventPacket, sink) -> int:
    out = io.StringIO()
    g = packet.geometry
    out.write(f"{g.width},{g.height}\n")
    p01 = (packet.p > 0).astype(np.int64)
    for t, x, y, p in zip(packet.t.tolist(), packet.x.tolist(), packet.y.tolist(), p01.tolist()):
        out.write(f"{t},{x},{y},{p}\n")
    data = out.getvalue().encode("utf-8")
    sink.write(data)
    return len(data)


def read_events_binary(source, strict: bool = True) -> EventPacket:
    data = _as_bytes(source)
    if len(data) < _HEADER.size:
        raise TruncationError(_HEADER.size, len(data))
    magic, width, height, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise EventFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + count * RECORD_DTYPE.itemsize
    if len(data) != expected:
        raise TruncationError(expected, len(data))
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=_HEADER.size)
    if np.any(rec["t"] > np.iinfo(np.int64).max):
        raise EventFormatError("timestamp exceeds int64 range")
    packet = EventPacket(SensorGeometry(width, height), rec["t"].astype(np.int64), rec["x"], rec["y"], rec["p"])
    return _finish(packet) if strict else packet


def write_events_binary(packet: EventPacket, sink) -> int:
    g = packet.geometry
    if g.width > 0xFFFF or g.height > 0xFFFF:
        raise EventFormatError("geometry does not fit the u16 header fields")
    rec = np.empty(len(packet), dtype=RECORD_DTYPE)
    rec["t"] = packet.t
    rec["x"] = packet.x
    rec["y"] = packet.y
    rec["p"] = packet.p
    data = _HEADER.pack(MAGIC, g.width, g.height, len(packet)) + rec.tobytes()
    sink.write(data)
    return len(data)


def is_binary_file(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC


def load_events(path, strict: bool = True) -> EventPacket:
    """Read a file in either format, detected from the magic bytes."""
    path = Path(path)
    reader = read_events_binary if is_binary_file(path) else read_events_text
    with open(path, "rb") as fh:
        return reader(fh, strict=strict)


def save_events(packet: EventPacket, path, binary: bool | None = None) -> int:
    """Write a packet; binary unless the suffix is .txt/.csv (or ``binary`` says otherwise)."""
    path = Path(path)
    if binary is None:
        binary = path.suffix.lower() not in (".txt", ".csv")
    writer = write_events_binary if binary else write_events_text
    with open(path, "wb") as fh:
        return writer(packet, fh)
