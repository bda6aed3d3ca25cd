"""Event data model: geometry, packets, validation and slicing.

Packets hold their events column-wise in read-only numpy arrays. Timestamps
are integer microseconds and polarity is always stored as -1/+1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

MAX_VIOLATIONS = 100


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ValueError(f"sensor geometry must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def num_pixels(self) -> int:
        """Total pixel count K."""
        return self.width * self.height

    def __str__(self):
        return f"{self.width}x{self.height}"


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EventPacket:
    """Time-ordered events bound to a sensor geometry.

    Construction copies the columns into read-only arrays; it does not check
    the ordering or bounds invariants (see :func:`validate_packet`).
    ``meta`` carries free-form provenance such as the simulation step.
    """

    geometry: SensorGeometry
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = {
            "t": _frozen(self.t, np.int64),
            "x": _frozen(self.x, np.int64),
            "y": _frozen(self.y, np.int64),
            "p": _frozen(self.p, np.int8),
        }
        lengths = {len(v) for v in cols.values()}
        if len(lengths) != 1:
            raise ValueError(f"event columns have mismatched lengths: { {k: len(v) for k, v in cols.items()} }")
        for k, v in cols.items():
            object.__setattr__(self, k, v)
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def empty(cls, geometry: SensorGeometry, meta=None) -> "EventPacket":
        z = np.zeros(0)
        return cls(geometry, z, z, z, z, meta or {})

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events, meta=None) -> "EventPacket":
        events = list(events)
        if not events:
            return cls.empty(geometry, meta)
        x, y, t, p = zip(*events)
        return cls(geometry, t, x, y, p, meta or {})

    def __len__(self):
        return len(self.t)

    @property
    def n(self) -> int:
        return len(self.t)

    def __getitem__(self, index):
        if isinstance(index, (int, np.integer)):
            return Event(int(self.x[index]), int(self.y[index]), int(self.t[index]), int(self.p[index]))
        return self.take(index)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(x, y, t, p)

    def take(self, index) -> "EventPacket":
        """Sub-packet selected by slice, boolean mask or index array."""
        return EventPacket(self.geometry, self.t[index], self.x[index], self.y[index], self.p[index], self.meta)

    def with_meta(self, **kwargs) -> "EventPacket":
        return EventPacket(self.geometry, self.t, self.x, self.y, self.p, {**self.meta, **kwargs})

    def same_events(self, other: "EventPacket") -> bool:
        """True when geometry and every event field match exactly."""
        return (
            self.geometry == other.geometry
            and len(self) == len(other)
            and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in "txyp")
        )

    @property
    def t_first(self) -> int:
        return int(self.t[0])

    @property
    def t_last(self) -> int:
        return int(self.t[-1])

    def __repr__(self):
        span = f", t=[{self.t_first}, {self.t_last}]" if len(self) else ""
        return f"EventPacket({self.geometry}, n={len(self)}{span})"


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(self.violations)


def validate_packet(packet: EventPacket) -> ValidationReport:
    """Check ordering, bounds and polarity; report at most the first 100 violations."""
    g = packet.geometry
    checks = [
        ("x out of bounds", (packet.x < 0) | (packet.x >= g.width)),
        ("y out of bounds", (packet.y < 0) | (packet.y >= g.height)),
        ("negative timestamp", packet.t < 0),
        ("polarity not in {-1,+1}", (packet.p != 1) & (packet.p != -1)),
    ]
    order = np.zeros(len(packet), dtype=bool)
    if len(packet) > 1:
        order[1:] = np.diff(packet.t) < 0
    checks.append(("timestamp order", order))

    found = []
    for label, mask in checks:
        for i in np.flatnonzero(mask)[:MAX_VIOLATIONS]:
            found.append((int(i), f"{label} at index {int(i)}"))
    found.sort(key=lambda item: item[0])
    return ValidationReport([msg for _, msg in found[:MAX_VIOLATIONS]])


def slice_by_count(packet: EventPacket, group_size: int, keep_partial: bool = False) -> list[EventPacket]:
    """Split into consecutive non-overlapping groups of ``group_size`` events.

    The trailing partial group is dropped unless ``keep_partial`` is set.
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    n = len(packet)
    stop = n if keep_partial else n - n % group_size
    return [packet.take(slice(i, min(i + group_size, n))) for i in range(0, stop, group_size)]


def slice_by_time(packet: EventPacket, window_us: int) -> list[EventPacket]:
    """Split into half-open windows of ``window_us`` starting at the first timestamp.

    Empty windows are kept so the time axis stays regular.
    """
    if window_us < 1:
        raise ValueError("window_us must be >= 1")
    if len(packet) == 0:
        return []
    t0 = packet.t_first
    n_windows = (packet.t_last - t0) // window_us + 1
    edges = t0 + window_us * np.arange(n_windows + 1, dtype=np.int64)
    bounds = np.searchsorted(packet.t, edges, side="left")
    return [packet.take(slice(int(a), int(b))) for a, b in zip(bounds[:-1], bounds[1:])]


def concatenate(packets: list[EventPacket]) -> EventPacket:
    """Join packets sharing a geometry, in the given order (no re-sort)."""
    if not packets:
        raise ValueError("nothing to concatenate")
    g = packets[0].geometry
    if any(pk.geometry != g for pk in packets):
        raise ValueError("packets have different geometries")
    cols = {c: np.concatenate([getattr(pk, c) for pk in packets]) for c in "txyp"}
    return EventPacket(g, meta=packets[0].meta, **cols)


def sort_stable(packet: EventPacket) -> EventPacket:
    """Return the packet sorted by timestamp, ties keeping input order."""
    order = np.argsort(packet.t, kind="stable")
    return packet.take(order)
