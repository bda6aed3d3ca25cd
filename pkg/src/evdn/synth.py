"""Synthetic DVS scenes, uniform noise injection and hot-pixel removal.

Scenes are simulated on a fixed time grid (``step_us``). Each pixel's
log-intensity is the background level blended with the pattern level by the
fraction of the pixel square the pattern covers. A pixel keeps a reference
level and emits one event every time its log-intensity moves a full
contrast threshold away from it; the reference then moves by exactly one
threshold in that direction. Event times are linearly interpolated inside
the step and rounded up to the next microsecond, so every event of step k
lies in ``(t_{k-1}, t_k]``.

Randomness (per-pixel threshold mismatch, noise) comes from numpy's PCG64
generator seeded with the caller's 64-bit seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import EventPacket, SensorGeometry

PATTERNS = ("translating-bar", "translating-disk")

# guards against float round-off when a change is an exact multiple of c
TRIGGER_EPS = 1e-9


@dataclass(frozen=True)
class SceneSpec:
    """Moving pattern seen by a DVS sensor.

    ``bar_width`` and ``period`` apply to bars (``period`` repeats the bar
    into a grating); ``radius`` applies to disks. Bars are oriented
    perpendicular to the velocity and span the whole sensor.
    """

    geometry: SensorGeometry
    duration_us: int
    pattern: str = "translating-bar"
    velocity: tuple[float, float] = (100.0, 0.0)
    contrast_threshold: float = 0.2
    l0: float = 0.0
    l1: float = 0.4
    bar_width: float = 8.0
    period: float | None = None
    radius: float | None = None
    step_us: int = 100
    threshold_sigma: float = 0.0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; choose from {PATTERNS}")
        if not self.contrast_threshold > 0:
            raise ValueError("contrast threshold must be positive")
        vx, vy = (float(v) for v in self.velocity)
        if abs(vx) + abs(vy) == 0:
            raise ValueError("zero velocity: a static pattern emits no events")
        object.__setattr__(self, "velocity", (vx, vy))
        if self.duration_us < 0 or self.step_us < 1:
            raise ValueError("duration must be >= 0 and step >= 1 us")
        if self.bar_width <= 0:
            raise ValueError("bar width must be positive")
        if self.period is not None and not self.period >= self.bar_width:
            raise ValueError("grating period must be at least the bar width")
        if self.threshold_sigma < 0:
            raise ValueError("threshold_sigma must be >= 0")

    @property
    def disk_radius(self) -> float:
        if self.radius is not None:
            return float(self.radius)
        return min(self.geometry.width, self.geometry.height) / 4.0

    def sample_times(self) -> np.ndarray:
        """Simulation grid: 0, step, 2*step, ... up to the duration."""
        return np.arange(0, self.duration_us + 1, self.step_us, dtype=np.int64)


# ---------------------------------------------------------------------------
# pattern geometry


def _unit(vx, vy):
    speed = math.hypot(vx, vy)
    return vx / speed, vy / speed, speed


def _pixel_grid(g: SensorGeometry):
    yy, xx = np.mgrid[0 : g.height, 0 : g.width]
    return xx.ravel().astype(np.float64), yy.ravel().astype(np.float64)


def _bar_start(spec: SceneSpec) -> float:
    """Band offset at t=0 so a single bar starts fully outside the sensor."""
    ux, uy, _ = _unit(*spec.velocity)
    g = spec.geometry
    corners = [0.0, (g.width - 1) * ux, (g.height - 1) * uy, (g.width - 1) * ux + (g.height - 1) * uy]
    return min(corners) - spec.bar_width - 1.0


def _disk_start(spec: SceneSpec) -> tuple[float, float]:
    ux, uy, _ = _unit(*spec.velocity)
    g = spec.geometry
    cx, cy = (g.width - 1) / 2.0, (g.height - 1) / 2.0
    reach = 0.5 * math.hypot(g.width, g.height) + spec.disk_radius + 1.0
    return cx - ux * reach, cy - uy * reach


def _square_cdf_np(z, a, b):
    """CDF of a*U + b*V, U, V ~ Uniform(-1/2, 1/2), with a >= b >= 0.

    This is the fraction of a unit pixel lying on the near side of a line at
    signed distance ``z`` from the pixel centre, for a line whose normal has
    absolute components (a, b).
    """
    z = np.asarray(z, dtype=np.float64)
    a = np.broadcast_to(a, z.shape)
    b = np.broadcast_to(b, z.shape)
    out = np.empty_like(z)
    h1 = 0.5 * (a + b)
    h2 = 0.5 * (a - b)
    thin = b < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.clip(z / a + 0.5, 0.0, 1.0)
        lo = (z + h1) ** 2 / (2 * a * b)
        mid = b / (2 * a) + (z + h2) / a
        hi = 1.0 - (h1 - z) ** 2 / (2 * a * b)
    out[:] = np.where(z <= -h1, 0.0, np.where(z <= -h2, lo, np.where(z <= h2, mid, np.where(z < h1, hi, 1.0))))
    out[thin] = lin[thin]
    return out


def pattern_coverage(spec: SceneSpec, t_us) -> np.ndarray:
    """Fraction of each pixel covered by the pattern at time ``t_us``, shape (height, width)."""
    g = spec.geometry
    xs, ys = _pixel_grid(g)
    t = float(t_us) * 1e-6
    ux, uy, speed = _unit(*spec.velocity)
    if spec.pattern == "translating-bar":
        a, b = max(abs(ux), abs(uy)), min(abs(ux), abs(uy))
        s = xs * ux + ys * uy
        if spec.period is None:
            off = _bar_start(spec) + speed * t
            cov = _square_cdf_np(off + spec.bar_width - s, a, b) - _square_cdf_np(off - s, a, b)
        else:
            period = float(spec.period)
            phase = np.mod(s - speed * t, period)
            cov = np.zeros_like(s)
            for j in (-1, 0, 1):
                cov += _square_cdf_np(j * period + spec.bar_width - phase, a, b) - _square_cdf_np(j * period - phase, a, b)
    else:
        cx0, cy0 = _disk_start(spec)
        dx = xs - (cx0 + spec.velocity[0] * t)
        dy = ys - (cy0 + spec.velocity[1] * t)
        r = np.hypot(dx, dy)
        with np.errstate(divide="ignore", invalid="ignore"):
            ax = np.where(r > 0, np.abs(dx) / r, 1.0)
            ay = np.where(r > 0, np.abs(dy) / r, 0.0)
        cov = _square_cdf_np(spec.disk_radius - r, np.maximum(ax, ay), np.minimum(ax, ay))
    return np.clip(cov, 0.0, 1.0).reshape(g.height, g.width)


def scene_log_intensity(spec: SceneSpec, t_us) -> np.ndarray:
    """Log-intensity image L(x, t) of the scene, shape (height, width)."""
    return spec.l0 + (spec.l1 - spec.l0) * pattern_coverage(spec, t_us)


def pixel_thresholds(spec: SceneSpec, seed: int) -> np.ndarray:
    """Per-pixel contrast thresholds, shape (height, width)."""
    g = spec.geometry
    c = np.full(g.num_pixels, spec.contrast_threshold)
    if spec.threshold_sigma > 0:
        rng = np.random.default_rng(seed)
        c = c * np.maximum(0.05, 1.0 + spec.threshold_sigma * rng.standard_normal(g.num_pixels))
    return c.reshape(g.height, g.width)


# ---------------------------------------------------------------------------
# compiled simulation kernel


@numba.njit(cache=True)
def _square_cdf(z, a, b):
    if b < 1e-12:
        v = z / a + 0.5
        return min(1.0, max(0.0, v))
    h1 = 0.5 * (a + b)
    h2 = 0.5 * (a - b)
    if z <= -h1:
        return 0.0
    if z <= -h2:
        return (z + h1) ** 2 / (2 * a * b)
    if z <= h2:
        return b / (2 * a) + (z + h2) / a
    if z < h1:
        return 1.0 - (h1 - z) ** 2 / (2 * a * b)
    return 1.0


@numba.njit(cache=True)
def _coverage(kind, x, y, t, p):
    """Coverage at time t (seconds) and a time span over which it stays constant."""
    # p: ux, uy, speed, a, b, offset0, width, period, cx0, cy0, vx, vy, radius
    h1 = 0.5 * (p[3] + p[4])
    speed = p[2]
    w = p[6]
    if kind == 0:
        rel = x * p[0] + y * p[1] - (p[5] + speed * t)
        if rel <= -h1:
            return 0.0, np.inf
        if rel >= w + h1:
            return 0.0, (rel - w - h1) / speed
        if h1 <= rel <= w - h1:
            return 1.0, (rel - h1) / speed
        return _square_cdf(w - rel, p[3], p[4]) - _square_cdf(-rel, p[3], p[4]), 0.0
    if kind == 1:
        period = p[7]
        phase = x * p[0] + y * p[1] - speed * t
        phase -= period * math.floor(phase / period)
        if h1 <= phase <= w - h1:
            return 1.0, (phase - h1) / speed
        if w + h1 <= phase <= period - h1:
            return 0.0, (phase - w - h1) / speed
        cov = 0.0
        for j in (-1.0, 0.0, 1.0):
            cov += _square_cdf(j * period + w - phase, p[3], p[4]) - _square_cdf(j * period - phase, p[3], p[4])
        return cov, 0.0
    dx = x - (p[8] + p[10] * t)
    dy = y - (p[9] + p[11] * t)
    r = math.sqrt(dx * dx + dy * dy)
    gap = abs(p[12] - r) - 1.0
    if gap > 0:
        return (1.0 if r < p[12] else 0.0), gap / speed
    if r > 0:
        ax = abs(dx) / r
        ay = abs(dy) / r
    else:
        ax = 1.0
        ay = 0.0
    return _square_cdf(p[12] - r, max(ax, ay), min(ax, ay)), 0.0


@numba.njit(cache=True)
def _simulate(kind, params, width, height, times, l0, dl, thresholds, out_t, out_pix, out_p):
    n = 0
    nsteps = times.shape[0]
    for pix in range(width * height):
        x = float(pix % width)
        y = float(pix // width)
        c = thresholds[pix]
        cov, _ = _coverage(kind, x, y, times[0] * 1e-6, params)
        prev = l0 + dl * min(1.0, max(0.0, cov))
        ref = prev
        k = 1
        while k < nsteps:
            cov, safe = _coverage(kind, x, y, times[k] * 1e-6, params)
            cur = l0 + dl * min(1.0, max(0.0, cov))
            diff = cur - ref
            if diff >= c * (1.0 - TRIGGER_EPS) or -diff >= c * (1.0 - TRIGGER_EPS):
                sign = 1.0 if diff > 0 else -1.0
                nev = int(math.floor(abs(diff) / c + TRIGGER_EPS))
                for j in range(1, nev + 1):
                    if n < out_t.shape[0]:
                        level = ref + sign * j * c
                        frac = (level - prev) / (cur - prev) if cur != prev else 1.0
                        frac = min(1.0, max(0.0, frac))
                        dt = times[k] - times[k - 1]
                        off = int(math.ceil(frac * dt - 1e-9))
                        off = min(dt, max(1, off))
                        out_t[n] = times[k - 1] + off
                        out_pix[n] = pix
                        out_p[n] = 1 if sign > 0 else -1
                    n += 1
                ref = ref + sign * nev * c
            prev = cur
            if safe > 0:
                # coverage is constant until t_k + safe: no further events, skip those steps
                limit = times[k] * 1e-6 + safe
                while k + 1 < nsteps and times[k + 1] * 1e-6 <= limit:
                    k += 1
            k += 1
    return n


def _kernel_params(spec: SceneSpec):
    ux, uy, speed = _unit(*spec.velocity)
    a, b = max(abs(ux), abs(uy)), min(abs(ux), abs(uy))
    if spec.pattern == "translating-bar":
        kind = 0 if spec.period is None else 1
    else:
        kind = 2
    cx0, cy0 = _disk_start(spec)
    params = np.array(
        [ux, uy, speed, a, b, _bar_start(spec), spec.bar_width, spec.period or 0.0,
         cx0, cy0, spec.velocity[0], spec.velocity[1], spec.disk_radius],
        dtype=np.float64,
    )
    return kind, params


def generate_scene(spec: SceneSpec, seed: int = 0) -> EventPacket:
    """Simulate the DVS response to ``spec``; deterministic for a given seed.

    Events are ordered by time, then row, then column. ``meta`` records the
    step, seed and scene parameters.
    """
    g = spec.geometry
    times = spec.sample_times()
    thresholds = pixel_thresholds(spec, seed).ravel()
    kind, params = _kernel_params(spec)
    dl = float(spec.l1 - spec.l0)
    meta = {"source": "synthetic", "pattern": spec.pattern, "step_us": spec.step_us, "seed": int(seed),
            "velocity": spec.velocity}
    if dl == 0.0 or len(times) < 2:
        return EventPacket.empty(g, meta)
    capacity = 1 << 16
    while True:
        out_t = np.empty(capacity, dtype=np.int64)
        out_pix = np.empty(capacity, dtype=np.int64)
        out_p = np.empty(capacity, dtype=np.int8)
        n = _simulate(kind, params, g.width, g.height, times, float(spec.l0), dl, thresholds, out_t, out_pix, out_p)
        if n <= capacity:
            break
        capacity = n
    out_t, out_pix, out_p = out_t[:n], out_pix[:n], out_p[:n]
    order = np.lexsort((out_pix, out_t))
    pix = out_pix[order]
    return EventPacket(g, out_t[order], pix % g.width, pix // g.width, out_p[order], meta)


# ---------------------------------------------------------------------------
# noise and hot pixels


@dataclass(frozen=True)
class NoiseSpec:
    ratio: float
    seed: int = 0

    def __post_init__(self):
        if not self.ratio >= 0:
            raise ValueError("noise ratio must be >= 0")


def inject_uniform_noise(packet: EventPacket, spec: NoiseSpec) -> EventPacket:
    """Add ``round(ratio * N)`` uniform background-activity events.

    Noise pixels are uniform over the sensor, timestamps uniform over the
    packet's own span and polarity uniform over {-1, +1}. Original events
    keep their relative order; noise sharing a timestamp with an original
    event is placed after it.
    """
    return inject_uniform_noise_labeled(packet, spec)[0]


def inject_uniform_noise_labeled(packet: EventPacket, spec: NoiseSpec):
    """Like :func:`inject_uniform_noise`, also returning a mask that marks the injected events."""
    n_noise = int(round(spec.ratio * len(packet)))
    if n_noise == 0:
        return packet, np.zeros(len(packet), dtype=bool)
    g = packet.geometry
    rng = np.random.default_rng(spec.seed)
    x = rng.integers(0, g.width, n_noise)
    y = rng.integers(0, g.height, n_noise)
    t = rng.integers(packet.t_first, packet.t_last + 1, n_noise)
    p = rng.choice(np.array([-1, 1], dtype=np.int8), n_noise)
    t_all = np.concatenate([packet.t, t])
    order = np.argsort(t_all, kind="stable")
    merged = EventPacket(
        g,
        t_all,
        np.concatenate([packet.x, x]),
        np.concatenate([packet.y, y]),
        np.concatenate([packet.p, p]),
        {**packet.meta, "noise_ratio": spec.ratio, "noise_seed": spec.seed},
    )
    return merged.take(order), order >= len(packet)


def pixel_counts(packet: EventPacket) -> np.ndarray:
    g = packet.geometry
    return np.bincount(packet.y * g.width + packet.x, minlength=g.num_pixels)


def remove_hot_pixels(packet: EventPacket, sigma_k: float = 5.0, counts=None):
    """Drop every event of pixels firing far above the typical active pixel.

    A pixel is hot when its count exceeds mean + ``sigma_k`` * std, both taken
    over pixels with at least one event. ``counts`` may supply precomputed
    per-pixel statistics (flattened, row-major) so the flag set can be held
    fixed across calls. Returns the filtered packet and the flagged
    ``(x, y)`` pixels.
    """
    if sigma_k <= 0:
        raise ValueError("sigma_k must be positive")
    g = packet.geometry
    counts = pixel_counts(packet) if counts is None else np.asarray(counts)
    active = counts[counts > 0]
    if len(active) == 0:
        return packet, []
    threshold = active.mean() + sigma_k * active.std()
    hot = np.flatnonzero(counts > threshold)
    if len(hot) == 0:
        return packet, []
    keep = ~np.isin(packet.y * g.width + packet.x, hot)
    flagged = [(int(i % g.width), int(i // g.width)) for i in hot]
    return packet.take(keep), flagged
