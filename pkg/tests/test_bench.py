import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evdn.bench import (
    CSV_HEADER,
    BenchmarkCell,
    BenchmarkError,
    BenchmarkPlan,
    BenchmarkReport,
    InputSource,
    Protocol,
    _noise_seed,
    emit_report,
    load_plan,
    plan_from_dict,
    resolve_workers,
    run_benchmark,
)
from evdn.core import SensorGeometry, slice_by_count
from evdn.filters import DENOISERS, apply_filter
from evdn.io import save_events
from evdn.metrics import MetricParams, WarpModel, mesr
from evdn.synth import NoiseSpec, SceneSpec, generate_scene, inject_uniform_noise

SCENE = SceneSpec(SensorGeometry(120, 90), 400_000, velocity=(150.0, 40.0), bar_width=6.0)
SMALL = Protocol(5_000, 3_000)


def plan(**kw):
    base = dict(inputs=(InputSource("bar", scene=SCENE),), filters=(("identity", None),), protocol=SMALL)
    base.update(kw)
    return BenchmarkPlan(**base)


def test_plan_invariants():
    with pytest.raises(ValueError, match="group_size > M"):
        Protocol(20_000, 20_000)
    with pytest.raises(ValueError):
        Protocol(10, 1)
    with pytest.raises(ValueError, match="input"):
        plan(inputs=())
    with pytest.raises(ValueError, match="filter"):
        plan(filters=())
    with pytest.raises(ValueError, match="unknown filter"):
        plan(filters=(("gef", None),))
    with pytest.raises(ValueError):
        plan(noise_levels=(0.1, -0.2))
    assert plan(noise_levels=(0.4, 0, 0.1)).noise_levels == (0.0, 0.1, 0.4)
    assert Protocol() == Protocol(30_000, 20_000, WarpModel.identity())


def test_identity_cell_equals_direct_mesr():
    report = run_benchmark(plan(noise_levels=(0,)))
    assert len(report.cells) == 1
    direct = mesr(slice_by_count(generate_scene(SCENE), 5_000), None, MetricParams(3_000))
    cell = report.cells[0]
    assert cell.mesr == direct.mean and cell.per_group == direct.per_group
    assert cell.kept_ratio == 1.0 and cell.wall_ms is None


def test_cells_match_direct_pipeline():
    report = run_benchmark(plan(filters=tuple((f, None) for f in DENOISERS), noise_levels=(0.2,), seed=3))
    stream = inject_uniform_noise(generate_scene(SCENE, 3), NoiseSpec(0.2, _noise_seed(3, 0, 0)))
    assert [c.filter for c in report.cells] == list(DENOISERS)
    for cell in report.cells:
        out, trace = apply_filter(stream, cell.filter)
        assert cell.kept_ratio == trace.kept_ratio
        groups = slice_by_count(out, 5_000)
        if cell.mesr is None:
            assert not groups or cell.excluded == len(groups)
        else:
            assert cell.mesr == mesr(groups, None, MetricParams(3_000)).mean


def test_noise_levels_lower_identity_mesr():
    report = run_benchmark(plan())
    values = [c.mesr for c in report.cells]
    assert [c.noise_level for c in report.cells] == [0.0, 0.1, 0.2, 0.4]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_cell_count_and_failed_input(tmp_path):
    missing = InputSource("missing", path=str(tmp_path / "nope.evt"))
    p = plan(inputs=(InputSource("bar", scene=SCENE), missing), filters=(("identity", None), ("baf", None)))
    report = run_benchmark(p)
    assert len(report.cells) == p.num_cells - 4 * 2
    assert report.errors[0]["input"] == "missing"
    assert all(0.0 <= c.kept_ratio <= 1.0 for c in report.cells)
    with pytest.raises(BenchmarkError, match="all 1 inputs failed"):
        run_benchmark(plan(inputs=(missing,)))


def test_all_groups_excluded_leaves_mesr_absent():
    # a huge warp velocity throws nearly every event off the sensor
    report = run_benchmark(plan(noise_levels=(0,), protocol=Protocol(5_000, 3_000, WarpModel.linear(1e6, 0))))
    cell = report.cells[0]
    assert cell.mesr is None and cell.groups == 0 and cell.excluded == len(cell.per_group) > 0
    buf = io.StringIO()
    emit_report(report, "csv", buf)
    assert buf.getvalue().splitlines()[1].split(",")[3] == ""


def test_excluded_cell_renders_empty():
    cell = BenchmarkCell("seq", 0.2, "baf", None, [None, None], 2, 0.5)
    buf = io.StringIO()
    emit_report(BenchmarkReport([cell], [], {}), "csv", buf)
    assert buf.getvalue() == ",".join(CSV_HEADER) + "\nseq,0.2,baf,,0,2,0.500000,\n"


def test_csv_formatting():
    cell = BenchmarkCell("seq", 0.1, "identity", 0.75277, [0.75277], 0, 1.0, 12.3456)
    buf = io.StringIO()
    n = emit_report(BenchmarkReport([cell], [], {}), "csv", buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "input,noise_level,filter,mesr,groups,excluded,kept_ratio,wall_ms"
    assert lines[1] == "seq,0.1,identity,0.752770,1,0,1.000000,12.346"
    assert n == len(buf.getvalue().encode())
    with pytest.raises(ValueError):
        emit_report(BenchmarkReport([cell], [], {}), "xml", io.StringIO())


def test_csv_byte_identical_across_runs_and_workers(monkeypatch):
    p = plan(filters=tuple((f, None) for f in (*DENOISERS, "identity")), seed=5)
    outputs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("EVDN_THREADS", threads)
        buf = io.StringIO()
        emit_report(run_benchmark(p), "csv", buf)
        outputs.append(buf.getvalue())
    assert outputs[0] == outputs[1]


def test_workers_env(monkeypatch):
    monkeypatch.setenv("EVDN_THREADS", "3")
    assert resolve_workers(8) == 3
    monkeypatch.setenv("EVDN_THREADS", "zero")
    with pytest.raises(ValueError):
        resolve_workers()
    monkeypatch.delenv("EVDN_THREADS")
    assert resolve_workers(2) == 2


def test_timing_recorded_when_asked():
    report = run_benchmark(plan(noise_levels=(0,), record_timing=True))
    assert report.cells[0].wall_ms >= 0


def _cells(draw_floats):
    return st.builds(
        BenchmarkCell,
        input=st.text(min_size=1, max_size=8),
        noise_level=st.sampled_from([0.0, 0.1, 0.2, 0.4]),
        filter=st.sampled_from(DENOISERS),
        mesr=st.one_of(st.none(), draw_floats),
        per_group=st.lists(st.one_of(st.none(), draw_floats), max_size=5),
        excluded=st.integers(0, 5),
        kept_ratio=st.floats(0, 1),
        wall_ms=st.one_of(st.none(), st.floats(0, 1e6)),
    )


@settings(max_examples=60, deadline=None)
@given(cells=st.lists(_cells(st.floats(0, 2, allow_nan=False)), max_size=6))
def test_json_round_trip(cells):
    report = BenchmarkReport(cells, [{"input": "x", "error": "gone"}], {"seed": 1, "protocol": {"m": 3}})
    buf = io.StringIO()
    emit_report(report, "json", buf)
    back = BenchmarkReport.from_dict(json.loads(buf.getvalue()))
    assert back == report


def test_json_report_of_real_run():
    report = run_benchmark(plan(noise_levels=(0, 0.2), filters=(("identity", None), ("baf", None))))
    buf = io.StringIO()
    emit_report(report, "json", buf)
    data = json.loads(buf.getvalue())
    assert list(data) == ["metadata", "cells", "errors"]
    assert data["metadata"]["protocol"] == {"group_size": 5_000, "m": 3_000, "warp": "identity"}
    assert BenchmarkReport.from_dict(data) == report


def test_plan_file(tmp_path):
    save_events(generate_scene(SCENE), tmp_path / "seq.evt")
    (tmp_path / "plan.json").write_text(json.dumps({
        "inputs": ["seq.evt", {"name": "synthetic", "scene": {"size": "120x90", "duration_us": 400000,
                                                             "velocity": [150, 40], "bar_width": 6}},
                   {"fixture": "standard"}],
        "filters": ["identity", {"id": "ts", "params": {"decay_tau_us": 5000}}],
        "noise_levels": [0, 0.2],
        "protocol": {"group_size": 5000, "m": 3000, "warp": "linear:150,40"},
        "seed": 2,
    }))
    p = load_plan(tmp_path / "plan.json")
    assert [s.name for s in p.inputs] == ["seq.evt", "synthetic", "standard"]
    assert p.inputs[0].path == str(tmp_path / "seq.evt")
    assert p.inputs[1].scene == SCENE
    assert p.filters[1][1].decay_tau_us == 5000.0
    assert p.protocol.warp == WarpModel.linear(150, 40)
    for bad in ({"inputs": [], "filters": ["baf"]}, {"inputs": ["a"], "filters": ["baf"], "extra": 1},
                {"inputs": ["a"], "filters": [{"id": "baf", "params": {"nope": 1}}]},
                {"inputs": [{"scene": {"duration_us": 5}}], "filters": ["baf"]}):
        with pytest.raises(ValueError):
            plan_from_dict(bad)
