"""Image of warped events (IWE) and the event structural ratio metrics.

The IWE is an integer histogram of events projected to a reference time.
From it:

* ``tss``             sum of squared pixel counts
* ``spatial_support`` number of non-empty pixels
* ``ntss``            probability that two distinct events share a pixel
* ``l_n``             spatial support interpolated to a reference count M
* ``esr``             sqrt(ntss * l_n) of a packet
* ``mesr``            mean ESR over fixed-size groups
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import EventPacket, SensorGeometry

logger = logging.getLogger(__name__)

DEFAULT_GROUP_SIZE = 30_000
DEFAULT_M = 20_000


class UndefinedMetricError(ValueError):
    """Raised when a metric is undefined for the given event count."""


@dataclass(frozen=True)
class WarpModel:
    """Identity or constant-velocity (pixels per second) warp to ``t_ref`` (us).

    A linear warp with ``t_ref=None`` projects each packet to the midpoint of
    its own time span, which keeps the displacement symmetric within a group.
    """

    kind: str = "identity"
    velocity: tuple[float, float] = (0.0, 0.0)
    t_ref: int | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "linear"):
            raise ValueError(f"unknown warp kind {self.kind!r}")
        vx, vy = (float(v) for v in self.velocity)
        if self.kind == "linear" and not (math.isfinite(vx) and math.isfinite(vy)):
            raise ValueError("linear warp needs a finite velocity")
        object.__setattr__(self, "velocity", (vx, vy))
        if self.t_ref is not None:
            object.__setattr__(self, "t_ref", int(self.t_ref))

    @classmethod
    def identity(cls) -> "WarpModel":
        return cls("identity")

    @classmethod
    def linear(cls, vx: float, vy: float, t_ref: int | None = None) -> "WarpModel":
        return cls("linear", (vx, vy), t_ref)

    @classmethod
    def parse(cls, text: str) -> "WarpModel":
        """Parse ``identity`` or ``linear:vx,vy[,t_ref]`` (no t_ref: packet midpoint)."""
        text = text.strip()
        if text == "identity":
            return cls.identity()
        kind, _, args = text.partition(":")
        if kind != "linear" or not args:
            raise ValueError(f"bad warp spec {text!r}; use identity or linear:vx,vy,tref")
        parts = args.split(",")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad warp spec {text!r}; use identity or linear:vx,vy,tref")
        try:
            t_ref = int(parts[2]) if len(parts) == 3 else None
            return cls.linear(float(parts[0]), float(parts[1]), t_ref)
        except ValueError:
            raise ValueError(f"bad warp spec {text!r}; use identity or linear:vx,vy,tref") from None

    def __str__(self):
        if self.kind == "identity":
            return "identity"
        head = f"linear:{self.velocity[0]:g},{self.velocity[1]:g}"
        return head if self.t_ref is None else f"{head},{self.t_ref}"

    def reference_time(self, packet: EventPacket) -> int:
        if self.t_ref is not None:
            return self.t_ref
        if len(packet) == 0:
            return 0
        return (packet.t_first + packet.t_last) // 2


@dataclass(frozen=True, eq=False)
class PixelHistogram:
    geometry: SensorGeometry
    counts: np.ndarray  # flattened row-major, length K
    discarded: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def image(self) -> np.ndarray:
        return self.counts.reshape(self.geometry.height, self.geometry.width)

    def distribution(self) -> np.ndarray:
        """Empirical pixel distribution n_i / N."""
        n = self.total
        if n == 0:
            raise UndefinedMetricError("empty histogram has no pixel distribution")
        return self.counts / n

    @classmethod
    def from_counts(cls, counts, geometry: SensorGeometry | None = None) -> "PixelHistogram":
        counts = np.asarray(counts, dtype=np.int64).reshape(-1)
        if np.any(counts < 0):
            raise ValueError("pixel counts must be non-negative")
        if geometry is None:
            geometry = SensorGeometry(len(counts), 1)
        if geometry.num_pixels != len(counts):
            raise ValueError("counts length does not match geometry")
        return cls(geometry, counts)


@dataclass(frozen=True)
class MetricParams:
    m: int = DEFAULT_M
    k: int | None = None  # None: take the full sensor pixel count from the histogram

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("reference count M must be >= 2")
        if self.k is not None and self.k < 1:
            raise ValueError("pixel count K must be >= 1")


def warp_coordinates(packet: EventPacket, model: WarpModel) -> tuple[np.ndarray, np.ndarray]:
    """Warped integer pixel coordinates (may fall outside the sensor)."""
    if model.kind == "identity":
        return packet.x.copy(), packet.y.copy()
    dt = (packet.t - model.reference_time(packet)).astype(np.float64) * 1e-6
    vx, vy = model.velocity
    # round half up, not numpy's half-to-even
    xw = np.floor(packet.x - vx * dt + 0.5).astype(np.int64)
    yw = np.floor(packet.y - vy * dt + 0.5).astype(np.int64)
    return xw, yw


def warp_to_iwe(packet: EventPacket, model: WarpModel | None = None) -> PixelHistogram:
    """Accumulate warped events into a unit-weight histogram, ignoring polarity."""
    g = packet.geometry
    xw, yw = warp_coordinates(packet, model or WarpModel.identity())
    inside = (xw >= 0) & (xw < g.width) & (yw >= 0) & (yw < g.height)
    flat = yw[inside] * g.width + xw[inside]
    counts = np.bincount(flat, minlength=g.num_pixels).astype(np.int64)
    return PixelHistogram(g, counts, int(len(packet) - np.count_nonzero(inside)))


def tss(h: PixelHistogram) -> int:
    return int(np.dot(h.counts, h.counts))


def spatial_support(h: PixelHistogram) -> int:
    return int(np.count_nonzero(h.counts))


def ntss(h: PixelHistogram) -> float:
    n = h.total
    if n < 2:
        raise UndefinedMetricError(f"NTSS needs at least 2 events, got N={n}")
    c = h.counts
    pairs = int(np.dot(c, c)) - n  # sum n_i (n_i - 1), exact in integers
    return pairs / (n * (n - 1))


def l_n(h: PixelHistogram, params: MetricParams) -> float:
    """Spatial support interpolated to ``params.m`` events.

    ``K - sum_i (1 - M/N) ** n_i`` with 0**0 = 1, so empty pixels contribute 1
    each to the sum and cancel against K.
    """
    n = h.total
    m = params.m
    if n == 0:
        raise UndefinedMetricError("L_N undefined for an empty histogram")
    if n < m:
        raise UndefinedMetricError(f"L_N needs N >= M, got N={n} < M={m}")
    k = params.k if params.k is not None else h.geometry.num_pixels
    alpha = 1.0 - m / n
    nz = h.counts[h.counts > 0]
    empty = k - len(nz)
    return float(k - (empty + np.sum(np.power(alpha, nz.astype(np.float64)))))


@dataclass(frozen=True)
class EsrComponents:
    ntss: float
    l_n: float
    esr: float
    n: int
    discarded: int


def esr_components(packet: EventPacket, model: WarpModel | None, params: MetricParams) -> EsrComponents:
    h = warp_to_iwe(packet, model)
    n = h.total
    if n < max(2, params.m):
        raise UndefinedMetricError(
            f"ESR needs effective N >= max(2, M); got N={n} (discarded {h.discarded}), M={params.m}"
        )
    a = ntss(h)
    b = l_n(h, params)
    return EsrComponents(a, b, math.sqrt(a * b), n, h.discarded)


def esr(packet: EventPacket, model: WarpModel | None, params: MetricParams) -> float:
    return esr_components(packet, model, params).esr


@dataclass(frozen=True)
class MesrResult:
    mean: float
    per_group: list  # ESR per input group, None where the group was excluded
    excluded: int

    @property
    def groups(self) -> int:
        return len(self.per_group) - self.excluded


def mesr(packets: list[EventPacket], model: WarpModel | None, params: MetricParams) -> MesrResult:
    """Mean ESR over groups; groups whose effective N is below M are excluded, not zeroed."""
    per_group = []
    for i, group in enumerate(packets):
        try:
            per_group.append(esr(group, model, params))
        except UndefinedMetricError as exc:
            logger.warning("group %d excluded from MESR: %s", i, exc)
            per_group.append(None)
    valid = [v for v in per_group if v is not None]
    if not valid:
        raise UndefinedMetricError(
            f"all {len(packets)} groups excluded: no group has effective N >= M={params.m}"
        )
    return MesrResult(float(np.mean(valid)), per_group, len(per_group) - len(valid))
