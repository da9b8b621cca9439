import numpy as np
import pytest

from flipbench import analysis, flipmodel, report
from flipbench.errors import ReportError
from flipbench.report import PlotKind, PlotSpec
from flipbench.traces import read_metadata, write_durations, write_freqs


def test_box_matches_summary(tmp_path, sim_schemes_dir):
    art, _ = sim_schemes_dir
    res = report.render(PlotSpec(PlotKind.DURATION_BOX, art.durations_path, tmp_path / "box.svg"))
    rows = analysis.summarize(art.durations_path, group_by=("node", "package", "scheme", "mask_bits"))
    assert (tmp_path / "box.svg").stat().st_size > 0
    n = 0
    for r in rows:
        drawn = res.panels[r.facet][r.scheme]
        assert drawn["med"] == pytest.approx(r.median_ns / 1e9, rel=1e-12)
        assert drawn["q1"] == pytest.approx(r.q1_ns / 1e9, rel=1e-12)
        assert drawn["q3"] == pytest.approx(r.q3_ns / 1e9, rel=1e-12)
        assert drawn["whislo"] == pytest.approx(r.min_ns / 1e9, rel=1e-12)
        assert drawn["whishi"] == pytest.approx(r.max_ns / 1e9, rel=1e-12)
        n += 1
    assert n == 6  # 3 schemes x 2 packages


def test_freq_timeline_matches_model(tmp_path, sim_schemes_dir):
    art, cfg = sim_schemes_dir
    meta = read_metadata(art.metadata_path)
    res = report.render(PlotSpec(PlotKind.FREQ_TIMELINE, art.durations_path, tmp_path / "f.svg", art.freq_path))
    seen = set()
    for facet, series in res.panels.items():
        for lab, (x, y) in series.items():
            expected = int(meta[f"predict.{lab}.frequency_khz"]) / 1e6
            assert np.all(y == expected)
            assert len(x) > 0
            seen.add(lab)
    assert seen == {s.canonical for s in cfg.schemes}


def test_density_sums_to_one(tmp_path, sim_masks_dir):
    art, _ = sim_masks_dir
    res = report.render(PlotSpec("FreqDensity", art.durations_path, tmp_path / "d.svg", art.freq_path))
    for series in res.panels.values():
        for dens, edges in series.values():
            assert float(np.sum(dens * np.diff(edges))) == pytest.approx(1.0)


def test_empty_input_raises_without_file(tmp_path):
    write_durations(tmp_path / "d.csv", [])
    out = tmp_path / "out.svg"
    with pytest.raises(ReportError):
        report.render(PlotSpec(PlotKind.DURATION_BOX, tmp_path / "d.csv", out))
    assert not out.exists()


def test_freq_kind_needs_freq_file(tmp_path, sim_schemes_dir):
    art, _ = sim_schemes_dir
    with pytest.raises(ReportError):
        report.render(PlotSpec(PlotKind.FREQ_DENSITY, art.durations_path, tmp_path / "x.svg"))
    write_freqs(tmp_path / "f.csv", [])
    with pytest.raises(ReportError):
        report.render(PlotSpec(PlotKind.FREQ_DENSITY, art.durations_path, tmp_path / "x.svg", tmp_path / "f.csv"))
    assert not (tmp_path / "x.svg").exists()


def test_unknown_kind(tmp_path, sim_schemes_dir):
    art, _ = sim_schemes_dir
    with pytest.raises(ReportError):
        report.render(PlotSpec("PieChart", art.durations_path, tmp_path / "x.svg"))


def test_svgs_are_deterministic(tmp_path, sim_schemes_dir):
    art, _ = sim_schemes_dir
    a = report.render_all(art.durations_path, art.freq_path, tmp_path / "a", art.run_id)
    b = report.render_all(art.durations_path, art.freq_path, tmp_path / "b", art.run_id)
    assert [p.name for p in a] == [f"{k.value}_{art.run_id}.svg" for k in PlotKind]
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()


def test_text_report_layout(sim_schemes_dir):
    art, _ = sim_schemes_dir
    joined = analysis.join_freq_durations(art.durations_path, art.freq_path)
    rows = analysis.summarize(art.durations_path, joined=joined)
    verdicts = analysis.applicable_verdicts(rows, joined)
    text = report.text_report(rows, verdicts, art.run_id)
    lines = text.splitlines()
    assert lines[0] == f"flipbench report {art.run_id}"
    table = lines[2:3 + len(rows)]
    assert len({len(l) for l in table}) == 1
    assert "median_ns" in table[0]
    assert lines[-3] == "verdicts:"
    assert lines[-2].startswith("ordering_check: PASS")
    assert lines[-1].startswith("freq_duration_coupling: PASS")


def test_label_freq_samples_uses_latest_call():
    from flipbench.traces import DurationSample, FreqSample
    d = [DurationSample("n", 0, 0, "random", None, 0, 8, "naive", 100, 10),
         DurationSample("n", 0, 0, "sequential", None, 0, 8, "naive", 200, 10)]
    f = [FreqSample(50, 0, 1), FreqSample(150, 0, 2), FreqSample(250, 0, 3), FreqSample(250, 1, 4)]
    got = [(x.frequency_khz, lab) for _, x, lab in report.label_freq_samples(d, f)]
    assert got == [(2, "random"), (3, "sequential")]
