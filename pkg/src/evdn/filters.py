"""Classical streaming event denoisers.

Every filter walks the packet once in time order and decides keep/drop per
event, using only the events already seen. State starts empty, so early
events without support are dropped. Decisions are returned as a
:class:`FilterDecisionTrace`; :func:`apply_filter` also builds the kept-only
packet.

Filter ids: ``baf``, ``knoise``, ``dwf``, ``ts``, ``iets``, ``ynoise``,
``evflow`` and ``identity`` (keeps everything).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import EventPacket

NEVER = np.iinfo(np.int64).min  # timestamp-map value for pixels that have not fired


@dataclass(frozen=True)
class FilterDecisionTrace:
    kept: np.ndarray  # bool per input event
    aux_state_entries: int | None = None  # size of the filter's auxiliary memory, when tracked

    @property
    def kept_count(self) -> int:
        return int(np.count_nonzero(self.kept))

    @property
    def dropped_count(self) -> int:
        return int(len(self.kept) - self.kept_count)

    @property
    def kept_ratio(self) -> float:
        return self.kept_count / len(self.kept) if len(self.kept) else 1.0


class _Config:
    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name.endswith("threshold"):
                if value < 0:
                    raise ValueError(f"{type(self).__name__}.{f.name} must be >= 0, got {value}")
            elif value <= 0:
                raise ValueError(f"{type(self).__name__}.{f.name} must be > 0, got {value}")


@dataclass(frozen=True)
class BafConfig(_Config):
    dt_us: int = 2_000


@dataclass(frozen=True)
class KNoiseConfig(_Config):
    dt_us: int = 1_000


@dataclass(frozen=True)
class DwfConfig(_Config):
    window_len: int = 36
    radius: int = 9
    threshold: int = 1


@dataclass(frozen=True)
class TsConfig(_Config):
    decay_tau_us: float = 20_000.0
    radius: int = 1
    surface_threshold: float = 0.3

    def __post_init__(self):
        super().__post_init__()
        if self.surface_threshold >= 1:
            raise ValueError("surface_threshold must be below 1")


@dataclass(frozen=True)
class IetsConfig(_Config):
    inceptive_window_us: int = 2_000


@dataclass(frozen=True)
class YNoiseConfig(_Config):
    radius: int = 2
    dt_us: int = 10_000
    density_threshold: int = 2


@dataclass(frozen=True)
class EvFlowConfig(_Config):
    radius: int = 3
    dt_us: int = 10_000
    min_neighbors: int = 4
    residual_threshold_us: float = 1_000.0

    def __post_init__(self):
        for name in ("radius", "dt_us", "min_neighbors", "residual_threshold_us"):
            if getattr(self, name) <= 0:
                raise ValueError(f"EvFlowConfig.{name} must be > 0")


@dataclass(frozen=True)
class IdentityConfig:
    pass


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True, nogil=True)
def _baf(t, x, y, width, height, dt):
    last = np.full(width * height, NEVER, dtype=np.int64)
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    for k in range(t.shape[0]):
        xk, yk, tk = x[k], y[k], t[k]
        for dy in range(-1, 2):
            yy = yk + dy
            if yy < 0 or yy >= height:
                continue
            for dx in range(-1, 2):
                xx = xk + dx
                if (dx == 0 and dy == 0) or xx < 0 or xx >= width:
                    continue
                tn = last[yy * width + xx]
                if tn != NEVER and tk - tn <= dt:
                    keep[k] = True
        last[yk * width + xk] = tk
    return keep


@numba.njit(cache=True, nogil=True)
def _knoise(t, x, y, p, width, height, dt):
    # row memory: x, t, p of the latest event per row; column memory: y, t, p per column
    row_x = np.full(height, -1, dtype=np.int64)
    row_t = np.zeros(height, dtype=np.int64)
    row_p = np.zeros(height, dtype=np.int8)
    col_y = np.full(width, -1, dtype=np.int64)
    col_t = np.zeros(width, dtype=np.int64)
    col_p = np.zeros(width, dtype=np.int8)
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    for k in range(t.shape[0]):
        xk, yk, tk = x[k], y[k], t[k]
        if row_x[yk] >= 0 and abs(row_x[yk] - xk) <= 1 and tk - row_t[yk] <= dt:
            keep[k] = True
        elif col_y[xk] >= 0 and abs(col_y[xk] - yk) <= 1 and tk - col_t[xk] <= dt:
            keep[k] = True
        row_x[yk] = xk
        row_t[yk] = tk
        row_p[yk] = p[k]
        col_y[xk] = yk
        col_t[xk] = tk
        col_p[xk] = p[k]
    return keep


@numba.njit(cache=True, nogil=True)
def _dwf(x, y, window_len, radius, threshold):
    # two ring buffers: row 0 holds kept (signal) events, row 1 dropped (noise) events
    bx = np.zeros((2, window_len), dtype=np.int64)
    by = np.zeros((2, window_len), dtype=np.int64)
    fill = np.zeros(2, dtype=np.int64)
    head = np.zeros(2, dtype=np.int64)
    keep = np.zeros(x.shape[0], dtype=np.bool_)
    for k in range(x.shape[0]):
        support = 0
        for w in range(2):
            for i in range(fill[w]):
                if abs(bx[w, i] - x[k]) <= radius and abs(by[w, i] - y[k]) <= radius:
                    support += 1
        w = 0 if support >= threshold else 1
        keep[k] = w == 0
        bx[w, head[w]] = x[k]
        by[w, head[w]] = y[k]
        head[w] = (head[w] + 1) % window_len
        if fill[w] < window_len:
            fill[w] += 1
    return keep


@numba.njit(cache=True, nogil=True)
def _ts(t, x, y, width, height, tau, radius, threshold):
    last = np.full(width * height, NEVER, dtype=np.int64)
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    n_nb = (2 * radius + 1) ** 2 - 1
    for k in range(t.shape[0]):
        xk, yk, tk = x[k], y[k], t[k]
        total = 0.0
        for dy in range(-radius, radius + 1):
            yy = yk + dy
            if yy < 0 or yy >= height:
                continue
            for dx in range(-radius, radius + 1):
                xx = xk + dx
                if (dx == 0 and dy == 0) or xx < 0 or xx >= width:
                    continue
                tn = last[yy * width + xx]
                if tn != NEVER:
                    total += math.exp(-(tk - tn) / tau)
        keep[k] = total / n_nb >= threshold
        last[yk * width + xk] = tk
    return keep


@numba.njit(cache=True, nogil=True)
def _iets(t, x, y, p, width, height, window):
    last = np.full((2, width * height), NEVER, dtype=np.int64)
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    for k in range(t.shape[0]):
        pol = 1 if p[k] > 0 else 0
        pix = y[k] * width + x[k]
        prev = last[pol, pix]
        keep[k] = prev == NEVER or t[k] - prev > window
        last[pol, pix] = t[k]
    return keep


@numba.njit(cache=True, nogil=True)
def _ynoise(t, x, y, width, height, radius, dt, threshold):
    last = np.full(width * height, NEVER, dtype=np.int64)
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    for k in range(t.shape[0]):
        xk, yk, tk = x[k], y[k], t[k]
        density = 0
        for dy in range(-radius, radius + 1):
            yy = yk + dy
            if yy < 0 or yy >= height:
                continue
            for dx in range(-radius, radius + 1):
                xx = xk + dx
                if (dx == 0 and dy == 0) or xx < 0 or xx >= width:
                    continue
                tn = last[yy * width + xx]
                if tn != NEVER and tk - tn <= dt:
                    density += 1
        keep[k] = density >= threshold
        last[yk * width + xk] = tk
    return keep


@numba.njit(cache=True, nogil=True)
def _plane_fit_residual(sx, sy, st, n):
    """Mean absolute residual of the least-squares plane t = a x + b y + c; -1 if degenerate."""
    mx = 0.0
    my = 0.0
    mt = 0.0
    for i in range(n):
        mx += sx[i]
        my += sy[i]
        mt += st[i]
    mx /= n
    my /= n
    mt /= n
    sxx = 0.0
    syy = 0.0
    sxy = 0.0
    sxt = 0.0
    syt = 0.0
    for i in range(n):
        dx = sx[i] - mx
        dy = sy[i] - my
        dt = st[i] - mt
        sxx += dx * dx
        syy += dy * dy
        sxy += dx * dy
        sxt += dx * dt
        syt += dy * dt
    det = sxx * syy - sxy * sxy
    scale = sxx + syy
    if scale <= 0 or det <= 1e-9 * scale * scale:
        return -1.0
    a = (sxt * syy - syt * sxy) / det
    b = (syt * sxx - sxt * sxy) / det
    res = 0.0
    for i in range(n):
        res += abs(st[i] - mt - a * (sx[i] - mx) - b * (sy[i] - my))
    return res / n


@numba.njit(cache=True, nogil=True)
def _evflow(t, x, y, width, height, radius, dt, min_neighbors, residual_threshold):
    last = np.full(width * height, NEVER, dtype=np.int64)
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    cap = (2 * radius + 1) ** 2
    sx = np.empty(cap)
    sy = np.empty(cap)
    st = np.empty(cap)
    for k in range(t.shape[0]):
        xk, yk, tk = x[k], y[k], t[k]
        n = 0
        for dy in range(-radius, radius + 1):
            yy = yk + dy
            if yy < 0 or yy >= height:
                continue
            for dx in range(-radius, radius + 1):
                xx = xk + dx
                if (dx == 0 and dy == 0) or xx < 0 or xx >= width:
                    continue
                tn = last[yy * width + xx]
                if tn != NEVER and tk - tn <= dt:
                    sx[n] = dx
                    sy[n] = dy
                    st[n] = tn - tk
                    n += 1
        if n >= min_neighbors:
            # the incoming event is part of the fit so an outlier cannot ride on a clean plane
            sx[n] = 0.0
            sy[n] = 0.0
            st[n] = 0.0
            res = _plane_fit_residual(sx, sy, st, n + 1)
            keep[k] = res >= 0 and res <= residual_threshold
        last[yk * width + xk] = tk
    return keep


# ---------------------------------------------------------------------------
# public filter functions


def _cols(packet: EventPacket):
    return packet.t, packet.x, packet.y


def baf(packet: EventPacket, config: BafConfig = BafConfig()) -> FilterDecisionTrace:
    """Background activity filter: keep events with a recent event among the 8 neighbours."""
    g = packet.geometry
    t, x, y = _cols(packet)
    return FilterDecisionTrace(_baf(t, x, y, g.width, g.height, int(config.dt_us)), g.num_pixels)


def knoise(packet: EventPacket, config: KNoiseConfig = KNoiseConfig()) -> FilterDecisionTrace:
    """Row/column memory filter with O(width + height) state."""
    g = packet.geometry
    t, x, y = _cols(packet)
    keep = _knoise(t, x, y, packet.p, g.width, g.height, int(config.dt_us))
    return FilterDecisionTrace(keep, g.width + g.height)


def dwf(packet: EventPacket, config: DwfConfig = DwfConfig()) -> FilterDecisionTrace:
    """Double window filter. Purely spatial: timestamps are not consulted."""
    keep = _dwf(packet.x, packet.y, int(config.window_len), int(config.radius), int(config.threshold))
    return FilterDecisionTrace(keep, 2 * config.window_len)


def ts_filter(packet: EventPacket, config: TsConfig = TsConfig()) -> FilterDecisionTrace:
    g = packet.geometry
    t, x, y = _cols(packet)
    keep = _ts(t, x, y, g.width, g.height, float(config.decay_tau_us), int(config.radius),
               float(config.surface_threshold))
    return FilterDecisionTrace(keep, g.num_pixels)


def iets_filter(packet: EventPacket, config: IetsConfig = IetsConfig()) -> FilterDecisionTrace:
    """Keep inceptive events only: the first of a same-pixel, same-polarity run."""
    g = packet.geometry
    t, x, y = _cols(packet)
    keep = _iets(t, x, y, packet.p, g.width, g.height, int(config.inceptive_window_us))
    return FilterDecisionTrace(keep, 2 * g.num_pixels)


def ynoise_filter(packet: EventPacket, config: YNoiseConfig = YNoiseConfig()) -> FilterDecisionTrace:
    g = packet.geometry
    t, x, y = _cols(packet)
    keep = _ynoise(t, x, y, g.width, g.height, int(config.radius), int(config.dt_us),
                   int(config.density_threshold))
    return FilterDecisionTrace(keep, g.num_pixels)


def evflow_filter(packet: EventPacket, config: EvFlowConfig = EvFlowConfig()) -> FilterDecisionTrace:
    """Drop events that do not sit on a locally planar time surface.

    The plane ``t = a x + b y + c`` is fitted to the recently active
    neighbours plus the event itself; too few neighbours, collinear support or
    a mean absolute residual above the threshold all mean drop.
    """
    g = packet.geometry
    t, x, y = _cols(packet)
    keep = _evflow(t, x, y, g.width, g.height, int(config.radius), int(config.dt_us),
                   int(config.min_neighbors), float(config.residual_threshold_us))
    return FilterDecisionTrace(keep, g.num_pixels)


def identity_filter(packet: EventPacket, config: IdentityConfig = IdentityConfig()) -> FilterDecisionTrace:
    return FilterDecisionTrace(np.ones(len(packet), dtype=bool), 0)


FILTERS = {
    "baf": (baf, BafConfig),
    "knoise": (knoise, KNoiseConfig),
    "dwf": (dwf, DwfConfig),
    "ts": (ts_filter, TsConfig),
    "iets": (iets_filter, IetsConfig),
    "ynoise": (ynoise_filter, YNoiseConfig),
    "evflow": (evflow_filter, EvFlowConfig),
    "identity": (identity_filter, IdentityConfig),
}
DENOISERS = tuple(k for k in FILTERS if k != "identity")


def _coerce(name, value, default):
    number = float(value)
    if isinstance(default, int):
        if number != int(number):
            raise ValueError(f"{name} must be an integer, got {value!r}")
        return int(number)
    return number


def make_config(filter_id: str, **params):
    """Build a filter config from keyword values, coercing strings to the field types."""
    if filter_id not in FILTERS:
        raise KeyError(f"unknown filter {filter_id!r}; choose from {sorted(FILTERS)}")
    cls = FILTERS[filter_id][1]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for name, value in params.items():
        if name not in fields:
            raise KeyError(f"{filter_id} has no parameter {name!r}; known: {sorted(fields)}")
        kwargs[name] = _coerce(name, value, fields[name].default)
    return cls(**kwargs)


def apply_filter(packet: EventPacket, filter_id: str, config=None) -> tuple[EventPacket, FilterDecisionTrace]:
    if filter_id not in FILTERS:
        raise KeyError(f"unknown filter {filter_id!r}; choose from {sorted(FILTERS)}")
    fn, cls = FILTERS[filter_id]
    if config is None:
        config = cls()
    elif isinstance(config, dict):
        config = make_config(filter_id, **config)
    trace = fn(packet, config)
    return packet.take(trace.kept), trace
