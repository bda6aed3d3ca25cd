import io
import json

import numpy as np
import pytest

from _helpers import random_packet
from evdn.cli import cli_main
from evdn.io import load_events, save_events


def run(argv):
    out = io.StringIO()
    code = cli_main(argv, out=out)
    return code, out.getvalue()


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "bar.evt"
    code, text = run(["synth", "--pattern", "bar", "--size", "80x60", "--velocity", "200,0",
                      "--duration", "400000", "--seed", "1", "-o", str(path)])
    assert code == 0 and "events written" in text
    return path


def test_validate_ok(scene_file):
    assert run(["validate", str(scene_file)]) == (0, "ok\n")


def test_validate_reports_violations(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("10,10\n5,1,1,1\n3,1,1,0\n")
    code, text = run(["validate", str(path)])
    assert code == 2 and text == "timestamp order at index 1\n"
    path.write_text("10,10\nabc,1,2,1\n")
    assert run(["validate", str(path)])[0] == 2
    assert "line 2" in capsys.readouterr().err


def test_score(scene_file):
    code, text = run(["score", str(scene_file), "--m", "2000", "--group", "3000"])
    assert code == 0
    lines = text.splitlines()
    assert lines[0].startswith("MESR ") and lines[1].startswith("group 0 ")
    code, text = run(["score", str(scene_file), "--m", "2000", "--group", "3000", "--warp", "linear:200,0"])
    assert code == 0


def test_score_n_below_m(scene_file, capsys):
    code, _ = run(["score", str(scene_file), "--m", "5000", "--group", "3000"])
    assert code == 2
    err = capsys.readouterr().err
    assert "M=5000" in err and "N" in err


def test_denoise_identity_keeps_bytes(scene_file, tmp_path):
    out = tmp_path / "same.evt"
    code, text = run(["denoise", str(scene_file), "--filter", "identity", "-o", str(out)])
    assert code == 0 and "ratio 1.000000" in text
    assert out.read_bytes() == scene_file.read_bytes()


def test_denoise_with_params(scene_file, tmp_path):
    out = tmp_path / "f.txt"
    code, text = run(["denoise", str(scene_file), "--filter", "ts", "--param", "decay_tau_us=5000",
                      "--param", "surface_threshold=0.2", "-o", str(out), "--format", "text"])
    assert code == 0 and "kept" in text
    assert out.read_text().startswith("80,60\n")
    assert run(["denoise", str(scene_file), "--filter", "ts", "--param", "nope=1", "-o", str(out)])[0] == 1
    assert run(["denoise", str(scene_file), "--filter", "ts", "--param", "bare", "-o", str(out)])[0] == 1
    assert run(["denoise", str(scene_file), "--filter", "gef", "-o", str(out)])[0] == 1


def test_inject_noise(scene_file, tmp_path):
    out = tmp_path / "noisy.evt"
    assert run(["inject-noise", str(scene_file), "--ratio", "0.2", "--seed", "4", "-o", str(out)])[0] == 0
    base, noisy = load_events(scene_file), load_events(out)
    assert len(noisy) == len(base) + round(0.2 * len(base))
    assert run(["inject-noise", str(scene_file), "--ratio", "-1", "-o", str(out)])[0] == 1


def test_bench(tmp_path):
    save_events(random_packet(np.random.default_rng(0), n=1500, width=30, height=20), tmp_path / "r.evt")
    plan = {"inputs": ["r.evt"], "filters": ["identity", "baf"], "noise_levels": [0, 0.2],
            "protocol": {"group_size": 600, "m": 400}}
    (tmp_path / "plan.json").write_text(json.dumps(plan))
    csv_out = tmp_path / "report.csv"
    code, text = run(["bench", "--plan", str(tmp_path / "plan.json"), "-o", str(csv_out)])
    assert code == 0 and "4 cells" in text
    rows = csv_out.read_text().splitlines()
    assert rows[0] == "input,noise_level,filter,mesr,groups,excluded,kept_ratio,wall_ms" and len(rows) == 5
    json_out = tmp_path / "report.json"
    assert run(["bench", "--plan", str(tmp_path / "plan.json"), "-o", str(json_out), "--timing"])[0] == 0
    assert all(c["wall_ms"] is not None for c in json.loads(json_out.read_text())["cells"])


def test_bench_bad_plans(tmp_path):
    (tmp_path / "bad.json").write_text('{"inputs": ["missing.evt"], "filters": ["baf"]}')
    assert run(["bench", "--plan", str(tmp_path / "bad.json"), "-o", str(tmp_path / "r.csv")])[0] == 2
    (tmp_path / "worse.json").write_text("{not json")
    assert run(["bench", "--plan", str(tmp_path / "worse.json"), "-o", str(tmp_path / "r.csv")])[0] == 2
    assert run(["bench", "--plan", str(tmp_path / "absent.json"), "-o", str(tmp_path / "r.csv")])[0] == 2


def test_usage_errors(capsys):
    assert run([])[0] == 1
    assert run(["bogus"])[0] == 1
    assert run(["score"])[0] == 1
    assert run(["validate", "x", "--frobnicate"])[0] == 1
    assert run(["synth", "--size", "80by60", "--velocity", "1,0", "--duration", "10", "-o", "x"])[0] == 1
    assert run(["synth", "--size", "8x6", "--velocity", "0,0", "--duration", "10", "-o", "x"])[0] == 1
    assert run(["--help"])[0] == 0
    assert "usage" in capsys.readouterr().err


def test_missing_file_is_data_error(tmp_path):
    assert run(["validate", str(tmp_path / "none.evt")])[0] == 2
    assert run(["score", str(tmp_path / "none.evt")])[0] == 2
