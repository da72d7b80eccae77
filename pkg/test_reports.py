"""
結果索引與 SVG 圖表測試

涵蓋範圍：
1. CSV 讀寫與 results_index.json（新的在前、同一 CSV 覆蓋）
2. SVG：每條線一個 group、點數正確、輸出可重現

跑法：
    pytest test_reports.py
"""
import json
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from src.experiments import GROWTH_COLUMNS, SUITE_COLUMNS  # noqa: E402
from src.report_generator import ChartGenerator  # noqa: E402
from src.report_manager import INDEX_NAME, ReportManager  # noqa: E402


def _growth_rows(values=(3.14, 3.3, 3.5)):
    return [
        {"operator": "max_hilbert", "p": 2.0, "D": 1, "lambda": "1/2", "set_size": 2 ** (k + 1),
         "grid": 64, "seed": 1, "estimate": v, "iters": 2, "runtime_ms": 0}
        for k, v in enumerate(values)
    ]


# ============================================================
# ReportManager
# ============================================================

def test_csv_roundtrip(tmp_path):
    manager = ReportManager(tmp_path)
    path = manager.write_csv(_growth_rows(), GROWTH_COLUMNS, tmp_path / "growth.csv")
    frame = manager.read_csv(path)
    assert list(frame.columns) == GROWTH_COLUMNS
    assert frame["set_size"].tolist() == [2, 4, 8]


def test_index_is_newest_first(tmp_path):
    manager = ReportManager(tmp_path)
    manager.record_run(_growth_rows(), GROWTH_COLUMNS, tmp_path / "a.csv", {"kind": "growth", "seed": 1})
    manager.record_run([], SUITE_COLUMNS, tmp_path / "b.csv", {"kind": "suite", "seed": 2})
    entries = manager.load_index()
    assert [e["run_id"] for e in entries] == ["b", "a"]
    assert entries[1]["rows"] == 3

    manager.record_run(_growth_rows(), GROWTH_COLUMNS, tmp_path / "a.csv", {"kind": "growth", "seed": 1})
    entries = manager.load_index()
    assert [e["run_id"] for e in entries] == ["a", "b"]

    on_disk = json.loads((tmp_path / INDEX_NAME).read_text(encoding="utf-8"))
    assert on_disk == entries


def test_corrupted_index_starts_over(tmp_path):
    (tmp_path / INDEX_NAME).write_text("{", encoding="utf-8")
    manager = ReportManager(tmp_path)
    assert manager.load_index() == []
    manager.record_run([], GROWTH_COLUMNS, tmp_path / "c.csv")
    assert len(manager.load_index()) == 1


def test_read_csv_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        ReportManager.read_csv(tmp_path / "missing.csv")
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(ValueError):
        ReportManager.read_csv(empty)


# ============================================================
# ChartGenerator
# ============================================================

def _groups_by_id(svg: str):
    root = ET.fromstring(svg)
    return {g.get("id"): g for g in root.iter("{http://www.w3.org/2000/svg}g") if g.get("id")}


def test_svg_has_one_group_per_series(tmp_path):
    frame = pd.DataFrame(_growth_rows(), columns=GROWTH_COLUMNS)
    svg = ChartGenerator(tmp_path).render(frame)
    groups = _groups_by_id(svg)
    series = groups["series-max_hilbert-D-1"]
    markers = [e for e in series.iter() if e.tag.endswith("use")]
    assert len(markers) == 3
    assert "fit-max_hilbert-D-1" in groups


def test_svg_is_deterministic(tmp_path):
    frame = pd.DataFrame(_growth_rows(), columns=GROWTH_COLUMNS)
    chart = ChartGenerator(tmp_path)
    assert chart.render(frame) == chart.render(frame)


def test_ratio_csv_takes_the_worst_instance():
    rows = [
        {"suite": "sfe", "p": 2.0, "D": 1, "lambda": "1/2", "set_size": n, "grid": 32, "seed": 1,
         "instance": i, "lhs": r, "rhs": 1.0, "ratio": r}
        for n in (2, 4) for i, r in enumerate((0.5, 0.7))
    ]
    [(label, sizes, values)] = ChartGenerator.series(pd.DataFrame(rows, columns=SUITE_COLUMNS))
    assert label == "sfe D=1"
    assert sizes.tolist() == [2.0, 4.0]
    assert values.tolist() == [0.7, 0.7]


def test_series_needs_a_value_column():
    with pytest.raises(ValueError):
        ChartGenerator.series(pd.DataFrame({"operator": ["x"], "D": [1], "set_size": [2]}))


def test_generate_chart_writes_svg(tmp_path):
    csv = ReportManager(tmp_path).write_csv(_growth_rows(), GROWTH_COLUMNS, tmp_path / "g.csv")
    out = ChartGenerator(tmp_path).generate_chart(csv)
    assert out == tmp_path / "g.svg"
    assert out.read_text(encoding="utf-8").lstrip().startswith("<?xml")
