import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from flipbench import analysis
from flipbench.analysis import SummaryRow
from flipbench.errors import AnalysisError, SpearmanUndefinedError, TraceFormatError
from flipbench.traces import DurationSample, FreqSample, write_durations


def sample(duration, scheme="random", core=0, node="n1", mask=None, start=0, idx=0):
    return DurationSample(node, core, idx, scheme, mask, 0, 64, "blocked", start, duration)


def brute_rank(v):
    return [sum(u < x for u in v) + (sum(u == x for u in v) + 1) / 2 for x in v]


def brute_spearman(x, y):
    rx, ry = brute_rank(x), brute_rank(y)
    n = len(x)
    mx, my = sum(rx) / n, sum(ry) / n
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


def sorted_quantile(v, p):
    v = sorted(v)
    h = (len(v) - 1) * p
    i = int(h)
    return v[i] if i + 1 == len(v) else v[i] + (h - i) * (v[i + 1] - v[i])


def test_textbook_quartiles():
    rows = analysis.summarize([sample(d, idx=i) for i, d in enumerate([5, 3, 1, 4, 2])], ("scheme",))
    (r,) = rows
    assert (r.min_ns, r.q1_ns, r.median_ns, r.q3_ns, r.max_ns, r.mean_ns) == (1, 2, 3, 4, 5, 3)
    assert r.n == 5


def test_quantile_against_numpy():
    rnd = random.Random(0)
    for _ in range(200):
        v = sorted(rnd.randint(1, 10**9) for _ in range(rnd.randint(1, 50)))
        for p in (0.25, 0.5, 0.75):
            assert analysis.quantile(v, p) == pytest.approx(np.quantile(v, p, method="linear"), rel=1e-12)


def test_group_by_scheme_and_ordering():
    data = [sample(10 + i, "random", idx=i) for i in range(3)] + \
        [sample(5, "constant:1", idx=i) for i in range(3)] + [sample(7, "sequential", idx=i) for i in range(3)]
    rows = analysis.summarize(data, ("scheme",))
    assert [r.scheme for r in rows] == ["constant:1", "random", "sequential"]
    assert all(r.node == "*" and r.group_core == "*" for r in rows)
    rows = analysis.summarize(data, ("node", "core", "scheme"))
    assert {r.group_core for r in rows} == {"0"}


def test_group_by_package():
    data = [sample(1, core=c, idx=0) for c in (0, 15, 16, 31)]
    rows = analysis.summarize(data, ("package",))
    assert [(r.group_core, r.n) for r in rows] == [("p0", 2), ("p1", 2)]


def test_summarize_errors(tmp_path):
    with pytest.raises(AnalysisError):
        analysis.summarize([], ("scheme",))
    with pytest.raises(AnalysisError):
        analysis.summarize([sample(1)], ("colour",))
    p = tmp_path / "d.csv"
    write_durations(p, [sample(1), sample(2, idx=1)])
    text = p.read_text().splitlines()
    text[2] = text[2].replace(",2", ",x")
    p.write_text("\n".join(text) + "\n")
    with pytest.raises(TraceFormatError) as e:
        analysis.summarize(p, ("scheme",))
    assert e.value.line == 3


def test_spearman_examples():
    assert analysis.spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert analysis.spearman([1, 2, 3], [1, 2, 3]) == 1.0
    x, y = [1, 2, 2, 3], [1, 2, 3, 4]
    assert analysis.spearman(x, y) == pytest.approx(brute_spearman(x, y), abs=1e-12)
    assert analysis.spearman(x, y) == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-12)


def test_spearman_errors():
    with pytest.raises(AnalysisError):
        analysis.spearman([1, 2, 3], [1, 2])
    with pytest.raises(AnalysisError):
        analysis.spearman([1, 2], [1, 2])
    with pytest.raises(SpearmanUndefinedError):
        analysis.spearman([1, 1, 1], [1, 2, 3])


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=3, max_size=30))
def test_spearman_property(pairs):
    x, y = [p[0] for p in pairs], [p[1] for p in pairs]
    if len(set(x)) == 1 or len(set(y)) == 1:
        with pytest.raises(SpearmanUndefinedError):
            analysis.spearman(x, y)
        return
    rho = analysis.spearman(x, y)
    assert -1 <= rho <= 1
    assert rho == pytest.approx(brute_spearman(x, y), abs=1e-12)
    assert analysis.spearman(y, x) == pytest.approx(rho, abs=1e-12)


def test_average_ranks():
    assert analysis.average_ranks([10, 20, 20, 5]) == [2.0, 3.5, 3.5, 1.0]


def rows_for(medians, node="n", core="p0"):
    return [SummaryRow(node, core, s, m, 1, v, v, v, v, v, v) for s, m, v in medians]


def test_ordering_check():
    ok = rows_for([("constant:1", None, 5.0), ("sequential", None, 7.0), ("random", None, 10.0)])
    v = analysis.ordering_check(ok)
    assert v.passed and v.statistic == 2.0
    assert v.line().startswith("ordering_check: PASS (gap=2.0)")
    shuffled = rows_for([("constant:1", None, 10.0), ("sequential", None, 7.0), ("random", None, 5.0)])
    assert not analysis.ordering_check(shuffled).passed
    equal = rows_for([("constant:1", None, 5.0), ("sequential", None, 5.0), ("random", None, 10.0)])
    v = analysis.ordering_check(equal)
    assert not v.passed and v.statistic == 0.0
    with pytest.raises(AnalysisError):
        analysis.ordering_check(ok[:2])


def test_ordering_check_several_constants_and_facets():
    rows = rows_for([("constant:0", None, 4.0), ("constant:0.987", None, 6.0),
                     ("sequential", None, 7.0), ("random", None, 10.0)])
    assert analysis.ordering_check(rows).statistic == 1.0
    rows.append(SummaryRow("n", "p1", "constant:0", None, 1, 8, 8, 8, 8, 8, 8))
    rows.append(SummaryRow("n", "p1", "sequential", None, 1, 7, 7, 7, 7, 7, 7))
    rows.append(SummaryRow("n", "p1", "random", None, 1, 9, 9, 9, 9, 9, 9))
    v = analysis.ordering_check(rows)
    assert not v.passed and v.statistic == -1.0


def test_monotonicity_check():
    dec = rows_for([("masked:%d" % k, k, 100.0 - k) for k in (0, 13, 26, 40, 53)])
    v = analysis.monotonicity_check(dec)
    assert v.passed and v.statistic == -1.0
    flat = rows_for([("masked:%d" % k, k, 5.0) for k in (0, 13, 26)])
    assert not analysis.monotonicity_check(flat).passed
    rev = rows_for([("masked:%d" % k, k, float(k)) for k in (0, 13, 26)])
    v = analysis.monotonicity_check(rev)
    assert not v.passed and v.statistic == 1.0
    with pytest.raises(AnalysisError):
        analysis.monotonicity_check(rev[:2])


def test_join_window_mean():
    d = [sample(100, start=1000)]
    f = [FreqSample(t, 0, k) for t, k in ((990, 1), (1000, 2_000_000), (1050, 2_200_000), (1100, 2_400_000), (1101, 7))]
    (j,) = analysis.join_freq_durations(d, f)
    assert j.flag == "window" and j.freq_mean_khz == 2_200_000


def test_join_nearest_and_missing():
    d = [sample(10, start=1000), sample(10, core=3, start=1000)]
    f = [FreqSample(500, 0, 1_000_000), FreqSample(1100, 0, 2_400_000)]
    j0, j3 = analysis.join_freq_durations(d, f)
    assert j0.flag == "nearest" and j0.freq_mean_khz == 2_400_000
    assert j3.flag == "missing" and j3.freq_mean_khz is None
    with pytest.raises(AnalysisError):
        analysis.join_freq_durations(d, f, {"clock": "wall"})


def test_summary_round_trip(tmp_path, sim_schemes_dir):
    art, _ = sim_schemes_dir
    joined = analysis.join_freq_durations(art.durations_path, art.freq_path)
    rows = analysis.summarize(art.durations_path, joined=joined)
    p = tmp_path / "summary.csv"
    analysis.write_summary(p, rows)
    assert analysis.read_summary(p) == rows
    assert all(r.freq_median_khz is not None for r in rows)
    q = tmp_path / "summary2.csv"
    analysis.write_summary(q, analysis.summarize(art.durations_path, joined=joined))
    assert p.read_bytes() == q.read_bytes()


def test_simulated_pipeline_verdicts(sim_schemes_dir, sim_masks_dir):
    art, _ = sim_schemes_dir
    joined = analysis.join_freq_durations(art.durations_path, art.freq_path)
    rows = analysis.summarize(art.durations_path, joined=joined)
    verdicts = analysis.applicable_verdicts(rows, joined)
    assert [v.name for v in verdicts] == ["ordering_check", "freq_duration_coupling"]
    assert all(v.passed for v in verdicts)
    assert verdicts[1].statistic <= -0.99
    art, _ = sim_masks_dir
    rows = analysis.summarize(art.durations_path)
    (v,) = analysis.applicable_verdicts(rows)
    assert v.name == "monotonicity_check" and v.passed and v.statistic == -1.0
    assert analysis.exit_code([v]) == 0
    assert analysis.exit_code([v, analysis.Verdict("x", False, 0.0, "")]) == 1
