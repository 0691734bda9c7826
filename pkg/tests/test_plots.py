import csv

from drivesense.plots import emit_plots

NAMES = ("s0", "v0", "T", "a", "b")


def report(n_windows=7, physiology=True, correlation=True):
    windows = [
        {"t_center_us": 5_000_000 * (k + 1), "params": {n: 1.0 + 0.1 * k + i for i, n in enumerate(NAMES)}}
        for k in range(n_windows)
    ]
    return {
        "windows": windows,
        "physiology": {"times_us": [1_000_000 * k for k in range(40)], "values": [0.1 * k for k in range(40)]}
        if physiology else None,
        "correlation": {"s0": 0.5, "v0": -0.25, "T": None, "a": 1.0, "b": 0.0} if correlation else None,
    }


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parameter_series_have_one_row_per_window(tmp_path):
    res = emit_plots(report(), tmp_path)
    assert res["notices"] == []
    for name in NAMES:
        data = rows(tmp_path / f"param_{name}.csv")
        assert len(data) == 7
        assert [int(r["t_center_us"]) for r in data] == [5_000_000 * (k + 1) for k in range(7)]
        assert (tmp_path / f"param_{name}.svg").read_text().lstrip().startswith(("<?xml", "<svg"))
    overlay = rows(tmp_path / "physiology_overlay.csv")
    assert sum(r["series"] == "physiology" for r in overlay) == 40
    assert sum(r["series"] == "T" for r in overlay) == 7


def test_correlation_bars(tmp_path):
    emit_plots(report(), tmp_path)
    data = rows(tmp_path / "correlation.csv")
    assert [r["param"] for r in data] == list(NAMES)
    assert data[2]["r"] == "" and float(data[0]["r"]) == 0.5
    svg = (tmp_path / "correlation.svg").read_text()
    assert "n/a" in svg or svg.count("<path") > 5


def test_empty_series_give_notices(tmp_path):
    res = emit_plots(report(0, physiology=False, correlation=False), tmp_path)
    assert res["written"] == []
    assert len(res["notices"]) == 2
    assert not list(tmp_path.glob("*.svg"))
    res = emit_plots(report(3, physiology=False), tmp_path / "b")
    assert any("physiology" in n for n in res["notices"])
    assert (tmp_path / "b" / "correlation.svg").exists()


def test_output_is_reproducible(tmp_path):
    emit_plots(report(), tmp_path / "a")
    emit_plots(report(), tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_accepts_report_path(tmp_path):
    import json

    (tmp_path / "report.json").write_text(json.dumps(report()))
    res = emit_plots(tmp_path / "report.json", tmp_path / "p")
    assert len(res["written"]) == 2 * 5 + 2 + 2
