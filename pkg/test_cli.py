"""
命令列測試

涵蓋範圍：
1. gen / check：產生、驗證、擾動後失敗、檔案錯誤
2. apply：方向 Hilbert、H_Θ、向量場截斷、參數錯誤
3. exp / plot：CSV 可重現、結果索引、設定檔錯誤

跑法：
    pytest test_cli.py
"""
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from main import EXIT_INVALID, EXIT_IO, EXIT_OK, main  # noqa: E402
from src.directions import Direction, DirectionSet, equispaced_set, load_set, save_set  # noqa: E402
from src.experiments import GROWTH_COLUMNS  # noqa: E402
from src.field_engine import plane_wave, random_bandlimited, read_field, write_field  # noqa: E402
from src.operators import trunc_complement_dir  # noqa: E402
from src.report_manager import INDEX_NAME, ReportManager  # noqa: E402


@pytest.fixture
def lacunary_set(tmp_path):
    path = tmp_path / "set.json"
    assert main(["gen", "--order", "1", "--lambda", "1/2", "--counts", "6", "--out", str(path)]) == EXIT_OK
    return path


@pytest.fixture
def wave_file(tmp_path):
    path = tmp_path / "wave.f2d1"
    write_field(path, plane_wave(32, (3, 2)))
    return path


# ============================================================
# gen / check
# ============================================================

def test_gen_writes_a_certified_set(capsys, lacunary_set):
    dset = load_set(lacunary_set)
    assert len(dset) == 6
    assert dset.order == 1
    assert dset[0].theta == Fraction(1, 8)
    assert "6 directions" in capsys.readouterr().out


def test_gen_order_zero(tmp_path):
    path = tmp_path / "root.json"
    assert main(["gen", "--order", "0", "--out", str(path)]) == EXIT_OK
    assert [d.theta for d in load_set(path)] == [Fraction(0)]


def test_gen_rejects_bad_lambda(tmp_path):
    assert main(["gen", "--order", "1", "--lambda", "1.5", "--out", str(tmp_path / "x.json")]) == EXIT_INVALID
    assert not (tmp_path / "x.json").exists()


def test_check_ok(lacunary_set, capsys):
    capsys.readouterr()
    assert main(["check", str(lacunary_set)]) == EXIT_OK
    assert "order 1, OK" in capsys.readouterr().out


def test_check_perturbed_set(lacunary_set, tmp_path, capsys):
    dset = load_set(lacunary_set)
    path = (2,)
    theta = dset.certificate.node_at(path).theta * Fraction(11, 10)
    broken = tmp_path / "broken.json"
    save_set(DirectionSet.from_tree(dset.certificate.with_angle(path, theta)), broken)
    capsys.readouterr()
    assert main(["check", str(broken)]) == EXIT_INVALID
    assert "violation" in capsys.readouterr().out


def test_check_file_errors(tmp_path, capsys):
    assert main(["check", str(tmp_path / "missing.json")]) == EXIT_IO

    plain = tmp_path / "plain.json"
    save_set(equispaced_set(3), plain)
    capsys.readouterr()
    assert main(["check", str(plain)]) == EXIT_INVALID
    assert "violation" in capsys.readouterr().out


# ============================================================
# apply
# ============================================================

def test_apply_hilbert_dir(lacunary_set, wave_file, tmp_path):
    out = tmp_path / "out.f2d1"
    code = main(["apply", "--op", "hilbert_dir", "--set", str(lacunary_set), "--in", str(wave_file),
                 "--out", str(out), "--direction-index", "0"])
    assert code == EXIT_OK
    expected = plane_wave(32, (3, 2)).scale(1j * np.pi).data
    assert np.allclose(read_field(out).data, expected, atol=1e-12)


def test_apply_max_hilbert(lacunary_set, tmp_path):
    source = tmp_path / "f.f2d1"
    write_field(source, random_bandlimited(32, 1, lambda a, b: np.hypot(a, b) <= 8))
    out = tmp_path / "out.f2d1"
    assert main(["apply", "--op", "max_hilbert", "--set", str(lacunary_set),
                 "--in", str(source), "--out", str(out)]) == EXIT_OK
    data = read_field(out).data
    assert np.all(data.imag == 0)
    assert np.all(data.real >= 0)


def test_apply_needs_a_set(wave_file, tmp_path):
    code = main(["apply", "--op", "max_hilbert", "--in", str(wave_file), "--out", str(tmp_path / "o.f2d1")])
    assert code == EXIT_INVALID


def test_apply_missing_input(lacunary_set, tmp_path):
    code = main(["apply", "--op", "hilbert_dir", "--set", str(lacunary_set),
                 "--in", str(tmp_path / "missing.f2d1"), "--out", str(tmp_path / "o.f2d1")])
    assert code == EXIT_IO


@pytest.mark.parametrize("op", ["directional_average", "trunc_hilbert_dir"])
@pytest.mark.parametrize("eps", ["0", "-0.25"])
def test_apply_rejects_non_positive_radius(op, eps, lacunary_set, wave_file, tmp_path):
    out = tmp_path / "o.f2d1"
    code = main(["apply", "--op", op, "--set", str(lacunary_set), "--in", str(wave_file),
                 "--out", str(out), "--eps", eps])
    assert code == EXIT_INVALID
    assert not out.exists()


def test_apply_radius_defaults_to_grid_spacing(lacunary_set, wave_file, tmp_path):
    default = tmp_path / "default.f2d1"
    explicit = tmp_path / "explicit.f2d1"
    common = ["apply", "--op", "directional_average", "--set", str(lacunary_set), "--in", str(wave_file)]
    assert main(common + ["--out", str(default)]) == EXIT_OK
    assert main(common + ["--out", str(explicit), "--eps", str(1 / 32)]) == EXIT_OK
    assert np.array_equal(read_field(default).data, read_field(explicit).data)


def test_apply_trunc_hilbert_field(tmp_path):
    field = tmp_path / "field.json"
    field.write_text(json.dumps({"order": 1, "lambdas": [{"expr": "1/16"}]}), encoding="utf-8")
    f = random_bandlimited(32, 2, lambda a, b: np.hypot(a, b) <= 8)
    source = tmp_path / "f.f2d1"
    write_field(source, f)
    out = tmp_path / "out.f2d1"
    code = main(["apply", "--op", "trunc_hilbert_field", "--field", str(field), "--eps", "0.1",
                 "--in", str(source), "--out", str(out)])
    assert code == EXIT_OK
    expected = trunc_complement_dir(f, Direction(Fraction(1, 16)), 0.1).data
    assert np.allclose(read_field(out).data, expected, atol=1e-12)


def test_apply_unknown_operator(wave_file, tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["apply", "--op", "riesz", "--in", str(wave_file), "--out", str(tmp_path / "o.f2d1")])
    assert excinfo.value.code == EXIT_INVALID


# ============================================================
# exp / plot
# ============================================================

def _write_config(tmp_path, data):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_exp_growth_is_reproducible(tmp_path):
    config = _write_config(tmp_path, {
        "kind": "growth", "operators": ["max_hilbert"], "orders": [1], "lambda": "1/2",
        "sizes": [2, 4], "p": [2], "grid": 32, "seed": 5, "probes": 1, "iters": 2,
    })
    out = tmp_path / "growth.csv"
    args = ["exp", "--config", str(config), "--out", str(out), "--results-dir", str(tmp_path)]
    assert main(args) == EXIT_OK
    first = out.read_bytes()
    frame = ReportManager.read_csv(out)
    assert list(frame.columns) == GROWTH_COLUMNS
    assert len(frame) == 2

    assert main(args) == EXIT_OK
    assert out.read_bytes() == first
    index = json.loads((tmp_path / INDEX_NAME).read_text(encoding="utf-8"))
    assert len(index) == 1
    assert index[0]["rows"] == 2


def test_exp_config_errors(tmp_path):
    out = str(tmp_path / "o.csv")
    assert main(["exp", "--config", str(tmp_path / "missing.json"), "--out", out,
                 "--results-dir", str(tmp_path)]) == EXIT_IO
    bad = _write_config(tmp_path, {"kind": "growth", "colour": "red"})
    assert main(["exp", "--config", str(bad), "--out", out, "--results-dir", str(tmp_path)]) == EXIT_INVALID


def test_plot(tmp_path):
    rows = [
        {"operator": "max_hilbert", "p": 2.0, "D": 1, "lambda": "1/2", "set_size": n, "grid": 32,
         "seed": 1, "estimate": 3.0 + 0.1 * k, "iters": 2, "runtime_ms": 0}
        for k, n in enumerate((2, 4, 8))
    ]
    csv = ReportManager(tmp_path).write_csv(rows, GROWTH_COLUMNS, tmp_path / "g.csv")
    svg = tmp_path / "g.svg"
    assert main(["plot", "--in", str(csv), "--out", str(svg)]) == EXIT_OK
    assert "series-max_hilbert-D-1" in svg.read_text(encoding="utf-8")
