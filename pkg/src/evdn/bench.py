"""Benchmark harness: noise levels x filters x inputs -> MESR report.

Each cell of a plan runs load/synthesize -> inject noise (rho > 0) -> filter
-> slice into fixed-size groups -> MESR. Cells are independent and run on a
thread pool; the report is assembled in plan order, so it does not depend on
scheduling. Wall time is only measured when the plan asks for it, which keeps
the default CSV byte-identical between runs.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numba
import numpy as np

from .core import EventPacket, SensorGeometry, slice_by_count
from .filters import FILTERS, apply_filter, make_config
from .io import load_events
from .metrics import (
    DEFAULT_GROUP_SIZE,
    DEFAULT_M,
    MetricParams,
    UndefinedMetricError,
    WarpModel,
    esr,
)
from .synth import NoiseSpec, SceneSpec, generate_scene, inject_uniform_noise

logger = logging.getLogger(__name__)

__version__ = "0.1.0"

DEFAULT_NOISE_LEVELS = (0.0, 0.1, 0.2, 0.4)
CSV_HEADER = ("input", "noise_level", "filter", "mesr", "groups", "excluded", "kept_ratio", "wall_ms")
THREADS_ENV = "EVDN_THREADS"


class BenchmarkError(RuntimeError):
    """Raised when no cell of a plan could be evaluated."""


# ---------------------------------------------------------------------------
# fixtures


def standard_fixture() -> SceneSpec:
    """Desk-scale stand-in for a recorded sequence.

    A slow vertical grating on a 346x260 sensor: every edge crosses four
    thresholds and moves about half a pixel per 30k-event group, so active
    pixels carry only a few events per group. The non-integer period keeps
    the bars from locking onto the pixel grid.
    """
    return SceneSpec(
        SensorGeometry(346, 260), 200_000, velocity=(20.0, 0.0), l1=0.8, bar_width=6.2, period=12.37
    )


def bar_fixture() -> SceneSpec:
    """A single default bar sweeping most of a 346x260 sensor."""
    return SceneSpec(SensorGeometry(346, 260), 2_900_000)


FIXTURES = {"standard": standard_fixture, "bar": bar_fixture}


# ---------------------------------------------------------------------------
# plan


@dataclass(frozen=True)
class InputSource:
    """An events file or a synthetic scene, under a display name."""

    name: str
    path: str | None = None
    scene: SceneSpec | None = None

    def __post_init__(self):
        if (self.path is None) == (self.scene is None):
            raise ValueError(f"input {self.name!r} needs exactly one of path or scene")

    def load(self, seed: int) -> EventPacket:
        if self.scene is not None:
            return generate_scene(self.scene, seed)
        return load_events(self.path)


@dataclass(frozen=True)
class Protocol:
    group_size: int = DEFAULT_GROUP_SIZE
    m: int = DEFAULT_M
    warp: WarpModel = field(default_factory=WarpModel.identity)

    def __post_init__(self):
        if not (self.group_size > self.m >= 2):
            raise ValueError(f"protocol needs group_size > M >= 2, got group_size={self.group_size}, M={self.m}")


@dataclass(frozen=True)
class BenchmarkPlan:
    inputs: tuple
    filters: tuple  # (filter_id, config) pairs
    noise_levels: tuple = DEFAULT_NOISE_LEVELS
    protocol: Protocol = field(default_factory=Protocol)
    seed: int = 0
    workers: int | None = None
    record_timing: bool = False

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("plan needs at least one input")
        if not self.filters:
            raise ValueError("plan needs at least one filter")
        names = [src.name for src in self.inputs]
        if len(set(names)) != len(names):
            raise ValueError(f"input names must be unique, got {names}")
        for fid, _ in self.filters:
            if fid not in FILTERS:
                raise ValueError(f"unknown filter {fid!r}")
        levels = tuple(float(r) for r in self.noise_levels)
        if not levels or any(not r >= 0 for r in levels):
            raise ValueError("noise levels must be a non-empty list of ratios >= 0")
        # reports list noise levels ascending, like the ND1 -> ND64 columns
        object.__setattr__(self, "noise_levels", tuple(sorted(set(levels))))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "filters", tuple((fid, cfg) for fid, cfg in self.filters))
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def num_cells(self) -> int:
        return len(self.inputs) * len(self.noise_levels) * len(self.filters)


def _scene_from_dict(d: dict) -> SceneSpec:
    d = dict(d)
    size = d.pop("size", None)
    if size is None:
        raise ValueError("scene needs 'size' as [width, height] or 'WxH'")
    if isinstance(size, str):
        size = size.lower().split("x")
    width, height = (int(v) for v in size)
    known = {f.name for f in fields(SceneSpec)} - {"geometry"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown scene keys {sorted(unknown)}")
    if "velocity" in d:
        d["velocity"] = tuple(d["velocity"])
    return SceneSpec(SensorGeometry(width, height), **d)


def _input_from_item(item, index: int, base_dir: Path) -> InputSource:
    if isinstance(item, str):
        item = {"path": item}
    if not isinstance(item, dict):
        raise ValueError(f"input #{index} must be a path or an object")
    item = dict(item)
    if "fixture" in item:
        key = item.pop("fixture")
        if key not in FIXTURES:
            raise ValueError(f"unknown fixture {key!r}; choose from {sorted(FIXTURES)}")
        return InputSource(item.get("name", key), scene=FIXTURES[key]())
    if "scene" in item:
        return InputSource(item.get("name", f"scene{index}"), scene=_scene_from_dict(item["scene"]))
    if "path" in item:
        path = Path(item["path"])
        if not path.is_absolute():
            path = base_dir / path
        return InputSource(item.get("name", Path(item["path"]).name), path=str(path))
    raise ValueError(f"input #{index} needs one of 'path', 'scene' or 'fixture'")


def _filter_from_item(item):
    if isinstance(item, str):
        item = {"id": item}
    if not isinstance(item, dict) or "id" not in item:
        raise ValueError("filter entries are an id string or {'id': ..., 'params': {...}}")
    try:
        return item["id"], make_config(item["id"], **item.get("params", {}))
    except KeyError as exc:
        raise ValueError(exc.args[0]) from None


PLAN_KEYS = {"inputs", "filters", "noise_levels", "protocol", "seed", "workers", "record_timing"}


def plan_from_dict(d: dict, base_dir=".") -> BenchmarkPlan:
    """Build a plan from its JSON object form; relative paths resolve against ``base_dir``."""
    unknown = set(d) - PLAN_KEYS
    if unknown:
        raise ValueError(f"unknown plan keys {sorted(unknown)}")
    base_dir = Path(base_dir)
    proto = dict(d.get("protocol", {}))
    bad = set(proto) - {"group_size", "m", "warp"}
    if bad:
        raise ValueError(f"unknown protocol keys {sorted(bad)}")
    protocol = Protocol(
        int(proto.get("group_size", DEFAULT_GROUP_SIZE)),
        int(proto.get("m", DEFAULT_M)),
        WarpModel.parse(proto.get("warp", "identity")),
    )
    return BenchmarkPlan(
        inputs=tuple(_input_from_item(it, i, base_dir) for i, it in enumerate(d.get("inputs", []))),
        filters=tuple(_filter_from_item(it) for it in d.get("filters", [])),
        noise_levels=tuple(d.get("noise_levels", DEFAULT_NOISE_LEVELS)),
        protocol=protocol,
        seed=int(d.get("seed", 0)),
        workers=d.get("workers"),
        record_timing=bool(d.get("record_timing", False)),
    )


def load_plan(path) -> BenchmarkPlan:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if not isinstance(d, dict):
        raise ValueError("plan file must hold a JSON object")
    return plan_from_dict(d, path.parent)


# ---------------------------------------------------------------------------
# report


@dataclass
class BenchmarkCell:
    input: str
    noise_level: float
    filter: str
    mesr: float | None  # None when every group was excluded
    per_group: list
    excluded: int
    kept_ratio: float
    wall_ms: float | None = None

    @property
    def groups(self) -> int:
        return len(self.per_group) - self.excluded


@dataclass
class BenchmarkReport:
    cells: list
    errors: list  # [{"input": name, "error": message}]
    metadata: dict

    def cell(self, input: str, noise_level: float, filter: str) -> BenchmarkCell:
        for c in self.cells:
            if c.input == input and c.noise_level == noise_level and c.filter == filter:
                return c
        raise KeyError((input, noise_level, filter))

    def to_dict(self) -> dict:
        cells = []
        for c in self.cells:
            d = asdict(c)
            d["groups"] = c.groups
            cells.append(d)
        return {"metadata": self.metadata, "cells": cells, "errors": list(self.errors)}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkReport":
        names = {f.name for f in fields(BenchmarkCell)}
        cells = [BenchmarkCell(**{k: v for k, v in c.items() if k in names}) for c in d["cells"]]
        return cls(cells, list(d["errors"]), dict(d["metadata"]))


def _group_esr(groups: list[EventPacket], warp: WarpModel, params: MetricParams):
    per_group = []
    for i, g in enumerate(groups):
        try:
            per_group.append(esr(g, warp, params))
        except UndefinedMetricError as exc:
            logger.warning("group %d excluded from MESR: %s", i, exc)
            per_group.append(None)
    return per_group


def _noise_seed(seed: int, input_index: int, level_index: int) -> int:
    # every filter of an (input, level) pair sees the same noisy stream
    return int(np.random.SeedSequence([seed, input_index, level_index]).generate_state(1, np.uint64)[0])


def resolve_workers(plan_workers: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return n
    if plan_workers is not None:
        return plan_workers
    return min(4, os.cpu_count() or 1)


def _metadata(plan: BenchmarkPlan) -> dict:
    return {
        "seed": plan.seed,
        "protocol": {"group_size": plan.protocol.group_size, "m": plan.protocol.m, "warp": str(plan.protocol.warp)},
        "noise_levels": list(plan.noise_levels),
        "filters": [fid for fid, _ in plan.filters],
        "versions": {
            "evdn": __version__,
            "numpy": np.__version__,
            "numba": numba.__version__,
            "python": platform.python_version(),
        },
    }


def run_benchmark(plan: BenchmarkPlan) -> BenchmarkReport:
    """Evaluate every (input, noise level, filter) cell of ``plan``.

    Inputs that fail to load are recorded in ``report.errors`` and their cells
    are left out; if nothing loads, :class:`BenchmarkError` is raised.
    """
    proto = plan.protocol
    params = MetricParams(proto.m)
    workers = resolve_workers(plan.workers)

    def load(item):
        i, src = item
        try:
            return src.load(plan.seed), None
        except (OSError, ValueError) as exc:
            logger.error("input %s failed: %s", src.name, exc)
            return None, {"input": src.name, "error": str(exc)}

    def noisy(item):
        i, j, packet = item
        rho = plan.noise_levels[j]
        if rho == 0:
            return packet
        return inject_uniform_noise(packet, NoiseSpec(rho, _noise_seed(plan.seed, i, j)))

    def run_cell(item):
        name, rho, fid, cfg, packet = item
        start = time.perf_counter()
        filtered, trace = apply_filter(packet, fid, cfg)
        per_group = _group_esr(slice_by_count(filtered, proto.group_size), proto.warp, params)
        wall = (time.perf_counter() - start) * 1e3 if plan.record_timing else None
        valid = [v for v in per_group if v is not None]
        return BenchmarkCell(
            input=name,
            noise_level=rho,
            filter=fid,
            mesr=float(np.mean(valid)) if valid else None,
            per_group=per_group,
            excluded=len(per_group) - len(valid),
            kept_ratio=trace.kept_ratio,
            wall_ms=wall,
        )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        loaded = list(pool.map(load, enumerate(plan.inputs)))
        errors = [err for _, err in loaded if err is not None]
        ok = [(i, src, pk) for i, (src, (pk, _)) in enumerate(zip(plan.inputs, loaded)) if pk is not None]
        if not ok:
            raise BenchmarkError(f"all {len(plan.inputs)} inputs failed: " + "; ".join(e["error"] for e in errors))
        pairs = [(i, j, pk) for i, _, pk in ok for j in range(len(plan.noise_levels))]
        streams = list(pool.map(noisy, pairs))
        jobs = []
        for (i, j, _), stream in zip(pairs, streams):
            for fid, cfg in plan.filters:
                jobs.append((plan.inputs[i].name, plan.noise_levels[j], fid, cfg, stream))
        cells = list(pool.map(run_cell, jobs))

    return BenchmarkReport(cells, errors, _metadata(plan))


def _fmt(value, spec: str) -> str:
    return "" if value is None else format(value, spec)


def emit_report(report: BenchmarkReport, format: str, sink) -> int:
    """Write ``report`` as CSV or JSON text to a text sink; returns the byte count."""
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in report.cells:
            w.writerow([
                c.input,
                format_noise(c.noise_level),
                c.filter,
                _fmt(c.mesr, ".6f"),
                c.groups,
                c.excluded,
                _fmt(c.kept_ratio, ".6f"),
                _fmt(c.wall_ms, ".3f"),
            ])
        text = buf.getvalue()
    elif format == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format {format!r}; use csv or json")
    sink.write(text)
    return len(text.encode("utf-8"))


def format_noise(rho: float) -> str:
    return format(rho, "g")
