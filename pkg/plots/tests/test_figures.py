import csv
import os
import shutil
import statistics

import pytest

from dflyplot.cli import main
from dflyplot.figures import (
    FIGURES,
    load_commtime,
    load_congestion,
    load_latency,
    load_stall,
    load_timeline,
    render,
)
from dflyplot.schema import SchemaError, load_csv

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.mark.parametrize("kind", sorted(FIGURES))
@pytest.mark.parametrize("ext", ["png", "svg"])
def test_every_kind_renders_deterministically(kind, ext, tmp_path):
    a = tmp_path / f"a.{ext}"
    b = tmp_path / f"b.{ext}"
    notes_a = render(kind, str(a), FIXTURES)
    notes_b = render(kind, str(b), FIXTURES)
    assert a.stat().st_size > 0
    assert notes_a == notes_b
    assert a.read_bytes() == b.read_bytes(), f"{kind}.{ext} not deterministic"


def test_compare_overlay_renders(tmp_path):
    out = tmp_path / "cmp.png"
    render("commtime_bars_with_std", str(out), FIXTURES, compare_dir=FIXTURES)
    assert out.stat().st_size > 0


def broken_copy(tmp_path, filename, mangle):
    """Copy the fixture dir, rewriting one CSV header via mangle()."""
    run = tmp_path / "broken"
    shutil.copytree(FIXTURES, run)
    path = run / filename
    lines = path.read_text().splitlines()
    lines[0] = mangle(lines[0])
    path.write_text("\n".join(lines) + "\n")
    return str(run)


def test_schema_mismatch_names_missing_column(tmp_path):
    run = broken_copy(tmp_path, "appstats.csv",
                      lambda h: h.replace("comm_ns", "comm_time"))
    with pytest.raises(SchemaError, match="missing column 'comm_ns'"):
        render("commtime_bars_with_std", str(tmp_path / "x.png"), run)
    run2 = broken_copy(tmp_path / "t2", "congestion_index.csv",
                       lambda h: h.replace("index", "value"))
    with pytest.raises(SchemaError, match="missing column 'index'"):
        render("congestion_heatmap", str(tmp_path / "y.png"), run2)


def test_empty_csv_is_an_error_not_a_blank_figure(tmp_path):
    run = tmp_path / "empty"
    shutil.copytree(FIXTURES, run)
    header = (run / "latency_summary.csv").read_text().splitlines()[0]
    (run / "latency_summary.csv").write_text(header + "\n")
    with pytest.raises(SchemaError, match="no data rows"):
        render("latency_box_with_percentiles", str(tmp_path / "x.png"), str(run))


def test_missing_file_is_schema_error(tmp_path):
    with pytest.raises(SchemaError, match="file not found"):
        render("commtime_bars_with_std", str(tmp_path / "x.png"), str(tmp_path))


def read_fixture(name):
    with open(os.path.join(FIXTURES, name), newline="") as fh:
        return list(csv.DictReader(fh))


def test_commtime_annotations_match_csv():
    bars, annotations = load_commtime(FIXTURES)
    rows = read_fixture("appstats.csv")
    for (job, mean, std), note in zip(bars, annotations):
        comm = [float(r["comm_ns"]) for r in rows if r["job_id"] == job]
        assert mean == pytest.approx(sum(comm) / len(comm))
        assert std == pytest.approx(statistics.pstdev(comm))
        assert note == f"{sum(comm) / len(comm):.1f}"


def test_latency_annotations_are_verbatim_csv_values():
    _rows, annotations = load_latency(FIXTURES)
    want = [r["p99_ns"] for r in read_fixture("latency_summary.csv")]
    assert annotations == want


def test_timeline_totals_match_csv():
    series, annotations = load_timeline(FIXTURES)
    rows = read_fixture("throughput_timeline.csv")
    for job, pts in series.items():
        want = sum(int(r["bytes"]) for r in rows if r["job_id"] == job)
        assert sum(b for _t, b in pts) == want
        assert f"job {job}: {want} B" in annotations


def test_congestion_grid_matches_csv():
    grid, annotations = load_congestion(FIXTURES)
    rows = read_fixture("congestion_index.csv")
    g = max(int(r["src_group"]) for r in rows) + 1
    assert len(grid) == g
    peak_row = max(rows, key=lambda r: float(r["index"]))
    assert peak_row["index"] in annotations[0]
    for r in rows:
        sg, dg = int(r["src_group"]), int(r["dst_group"])
        cell = grid[sg][sg] if r["kind"] == "local" else grid[sg][dg]
        assert cell == float(r["index"])


def test_stall_totals_match_csv():
    groups, local, edges, annotations = load_stall(FIXTURES, from_group=0)
    rows = read_fixture("linkstats.csv")
    max_router = max(max(int(r["src_router"]), int(r["dst_router"])) for r in rows)
    per_group = (max_router + 1) // groups
    want_local = {g: 0.0 for g in range(groups)}
    for r in rows:
        if r["kind"] == "local":
            want_local[int(r["src_router"]) // per_group] += float(r["stall_ns"])
    assert local == pytest.approx(want_local)
    assert annotations[0] == f"G0: {want_local[0]:.1f}"


def test_cli_end_to_end(tmp_path, capsys):
    out = tmp_path / "fig.png"
    assert main(["congestion_heatmap", "--run", FIXTURES, "--out", str(out)]) == 0
    assert out.exists()
    assert main(["congestion_heatmap", "--run", str(tmp_path), "--out",
                 str(tmp_path / "y.png")]) == 2
    err = capsys.readouterr().err
    assert "error:" in err


def test_load_csv_rejects_unknown_requirements(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError, match="missing column 'c'"):
        load_csv(str(tmp_path), "x.csv", ["a", "c"])
