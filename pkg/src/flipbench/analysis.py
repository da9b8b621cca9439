"""Summaries, rank correlation and verdicts over trace files.

Quantiles use linear interpolation between order statistics (the
"type 7" definition): ``h = (n - 1) * p``, interpolate between the values
at ``floor(h)`` and ``floor(h) + 1`` of the sorted sample. Verdicts are
driven by medians.
"""

import bisect
import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from flipbench.errors import AnalysisError, SpearmanUndefinedError, TraceFormatError
from flipbench.traces import DurationSample, read_durations, read_freqs

SUMMARY_HEADER = [
    "node", "group_core", "scheme", "mask_bits", "n",
    "min_ns", "q1_ns", "median_ns", "q3_ns", "max_ns", "mean_ns", "freq_median_khz",
]
GROUP_KEYS = ("node", "core", "package", "scheme", "mask_bits")
DEFAULT_GROUP_BY = ("node", "package", "scheme", "mask_bits")
CORES_PER_PACKAGE = 16
ALL = "*"

MONOTONICITY_THRESHOLD = -0.9
COUPLING_THRESHOLD = -0.9


def quantile(sorted_values, p):
    n = len(sorted_values)
    if n == 0:
        raise AnalysisError("quantile of an empty sample")
    h = (n - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    return sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo])


def median(values):
    return quantile(sorted(values), 0.5)


def average_ranks(values):
    """1-based ranks; tied values share the mean of the ranks they span."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        r = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = r
        i = j + 1
    return ranks


def _pearson(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        raise SpearmanUndefinedError("rank correlation is undefined for constant input")
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def spearman(x, y):
    """Spearman's rho: Pearson correlation of average ranks."""
    x = list(x)
    y = list(y)
    if len(x) != len(y):
        raise AnalysisError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise AnalysisError("need at least 3 pairs")
    return _pearson(average_ranks(x), average_ranks(y))


@dataclass(frozen=True)
class SummaryRow:
    node: str
    group_core: str
    scheme: str
    mask_bits: int | None
    n: int
    min_ns: float
    q1_ns: float
    median_ns: float
    q3_ns: float
    max_ns: float
    mean_ns: float
    freq_median_khz: float | None = None

    @property
    def scheme_kind(self):
        return self.scheme.partition(":")[0]

    @property
    def facet(self):
        return (self.node, self.group_core)


def _group_key(s, keys, cores_per_package):
    node = s.node if "node" in keys else ALL
    if "core" in keys:
        core = str(s.core)
    elif "package" in keys:
        core = f"p{s.core // cores_per_package}"
    else:
        core = ALL
    scheme = s.scheme if "scheme" in keys else ALL
    mask = s.mask_bits if "mask_bits" in keys else None
    return node, core, scheme, mask


def _sort_key(k):
    node, core, scheme, mask = k
    return node, core, scheme, -1 if mask is None else mask


def _load(durations):
    if isinstance(durations, (str, Path)):
        return read_durations(durations)
    return list(durations)


def summarize(durations, group_by=DEFAULT_GROUP_BY, joined=None, cores_per_package=CORES_PER_PACKAGE):
    """Per-group five-number summary plus mean, ordered by group key.

    ``joined`` (from :func:`join_freq_durations`) adds the median of the
    per-call mean frequencies to each group.
    """
    unknown = set(group_by) - set(GROUP_KEYS)
    if unknown:
        raise AnalysisError(f"unknown group-by keys {sorted(unknown)}; allowed: {GROUP_KEYS}")
    samples = _load(durations)
    if not samples:
        raise AnalysisError("no duration rows to summarize")
    groups = defaultdict(list)
    freq_groups = defaultdict(list)
    for s in samples:
        groups[_group_key(s, group_by, cores_per_package)].append(s.duration_ns)
    if joined is not None:
        for j in joined:
            if j.freq_mean_khz is not None:
                freq_groups[_group_key(j.sample, group_by, cores_per_package)].append(j.freq_mean_khz)
    rows = []
    for key in sorted(groups, key=_sort_key):
        v = sorted(groups[key])
        fq = freq_groups.get(key)
        rows.append(SummaryRow(
            *key,
            n=len(v),
            min_ns=float(v[0]),
            q1_ns=float(quantile(v, 0.25)),
            median_ns=float(quantile(v, 0.5)),
            q3_ns=float(quantile(v, 0.75)),
            max_ns=float(v[-1]),
            mean_ns=math.fsum(v) / len(v),
            freq_median_khz=median(fq) if fq else None,
        ))
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in SUMMARY_HEADER])


def read_summary(path):
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != SUMMARY_HEADER:
            raise TraceFormatError(path, 1, f"bad header {header!r}")
        for row in reader:
            if len(row) != len(SUMMARY_HEADER):
                raise TraceFormatError(path, reader.line_num, "wrong field count")
            d = dict(zip(SUMMARY_HEADER, row))
            try:
                rows.append(SummaryRow(
                    node=d["node"],
                    group_core=d["group_core"],
                    scheme=d["scheme"],
                    mask_bits=int(d["mask_bits"]) if d["mask_bits"] else None,
                    n=int(d["n"]),
                    **{k: float(d[k]) for k in SUMMARY_HEADER[5:11]},
                    freq_median_khz=float(d["freq_median_khz"]) if d["freq_median_khz"] else None,
                ))
            except ValueError as e:
                raise TraceFormatError(path, reader.line_num, str(e)) from None
    return rows


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    statistic: float
    detail: str
    statistic_name: str = "statistic"

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {status} ({self.statistic_name}={self.statistic!r}) {self.detail}".rstrip()


def _by_facet(rows):
    facets = defaultdict(list)
    for r in rows:
        facets[r.facet].append(r)
    return dict(sorted(facets.items()))


ORDER = ("constant", "sequential", "random")


def ordering_check(rows):
    """Strict ``constant < sequential < random`` on median duration, per facet.

    Several constant values may be present; all of them must be below
    sequential. The statistic is the smallest gap (ns) over all facets.
    """
    facets = _by_facet(rows)
    gaps = []
    details = []
    for facet, fr in facets.items():
        med = defaultdict(list)
        for r in fr:
            med[r.scheme_kind].append(r.median_ns)
        missing = [k for k in ORDER if k not in med]
        if missing:
            raise AnalysisError(f"ordering_check: facet {facet} lacks schemes {missing}")
        if len(med["sequential"]) > 1 or len(med["random"]) > 1:
            raise AnalysisError(f"ordering_check: facet {facet} has several rows per scheme; group by scheme")
        c, s, r = max(med["constant"]), med["sequential"][0], med["random"][0]
        gaps.append(min(s - c, r - s))
        details.append(f"{'/'.join(facet)}: {c:g} < {s:g} < {r:g}")
    stat = min(gaps)
    return Verdict("ordering_check", stat > 0, float(stat), "; ".join(details), "gap")


def monotonicity_check(rows, threshold=MONOTONICITY_THRESHOLD):
    """Spearman(mask_bits, median duration) <= threshold in every facet.

    The statistic is the largest (worst) rho over facets.
    """
    facets = _by_facet(r for r in rows if r.mask_bits is not None)
    if not facets:
        raise AnalysisError("monotonicity_check: no masked rows")
    rhos = []
    details = []
    for facet, fr in facets.items():
        masks = [r.mask_bits for r in fr]
        if len(set(masks)) < 3:
            raise AnalysisError(f"monotonicity_check: facet {facet} has fewer than 3 mask sizes")
        if len(set(masks)) != len(masks):
            raise AnalysisError(f"monotonicity_check: facet {facet} has several rows per mask size")
        try:
            rho = spearman(masks, [r.median_ns for r in fr])
        except SpearmanUndefinedError:
            rho = 0.0
        rhos.append(rho)
        details.append(f"{'/'.join(facet)}: rho={rho:.4f}")
    stat = max(rhos)
    return Verdict("monotonicity_check", stat <= threshold, float(stat), "; ".join(details), "rho")


@dataclass(frozen=True)
class JoinedRow:
    sample: DurationSample
    freq_mean_khz: float | None
    flag: str  # "window", "nearest" or "missing"


def join_freq_durations(durations, freqs, metadata=None):
    """Attach the mean core frequency observed during each call.

    The window is ``[start_ns, start_ns + duration_ns]`` inclusive. An empty
    window falls back to the nearest sample in time (flag ``nearest``); a
    core without any frequency data gets ``None`` (flag ``missing``).
    """
    if metadata is not None and metadata.get("clock") not in ("monotonic", "simulated"):
        raise AnalysisError(f"traces do not share a known clock base: clock={metadata.get('clock')!r}")
    samples = _load(durations)
    if isinstance(freqs, (str, Path)):
        freqs = read_freqs(freqs)
    per_core = defaultdict(list)
    for f in freqs:
        per_core[f.core].append((f.timestamp_ns, f.frequency_khz))
    times = {}
    prefix = {}
    for core, seq in per_core.items():
        seq.sort()
        times[core] = [t for t, _ in seq]
        acc = [0]
        for _, v in seq:
            acc.append(acc[-1] + v)
        prefix[core] = (acc, [v for _, v in seq])
    out = []
    for s in samples:
        ts = times.get(s.core)
        if not ts:
            out.append(JoinedRow(s, None, "missing"))
            continue
        acc, vals = prefix[s.core]
        lo = bisect.bisect_left(ts, s.start_ns)
        hi = bisect.bisect_right(ts, s.start_ns + s.duration_ns)
        if hi > lo:
            out.append(JoinedRow(s, (acc[hi] - acc[lo]) / (hi - lo), "window"))
            continue
        mid = s.start_ns + s.duration_ns / 2
        cands = [i for i in (lo - 1, lo) if 0 <= i < len(ts)]
        best = min(cands, key=lambda i: (abs(ts[i] - mid), i))
        out.append(JoinedRow(s, float(vals[best]), "nearest"))
    return out


def coupling(joined):
    """Spearman rho between per-call mean frequency and duration."""
    pairs = [(j.freq_mean_khz, j.sample.duration_ns) for j in joined if j.freq_mean_khz is not None]
    if len(pairs) < 3:
        raise AnalysisError("fewer than 3 calls with frequency data")
    return spearman([p[0] for p in pairs], [p[1] for p in pairs])


def coupling_check(joined, threshold=COUPLING_THRESHOLD):
    try:
        rho = coupling(joined)
    except SpearmanUndefinedError:
        return Verdict("freq_duration_coupling", False, 0.0, "constant frequency or duration", "rho")
    n = sum(j.freq_mean_khz is not None for j in joined)
    return Verdict("freq_duration_coupling", rho <= threshold, float(rho), f"{n} calls", "rho")


def applicable_verdicts(rows, joined=None, monotonicity_threshold=MONOTONICITY_THRESHOLD,
                        coupling_threshold=COUPLING_THRESHOLD):
    """Run every check the data supports."""
    verdicts = []
    kinds = {r.scheme_kind for r in rows}
    if set(ORDER) <= kinds:
        verdicts.append(ordering_check([r for r in rows if r.scheme_kind in ORDER]))
    masked = [r for r in rows if r.mask_bits is not None]
    if len({r.mask_bits for r in masked}) >= 3:
        verdicts.append(monotonicity_check(masked, monotonicity_threshold))
    if joined is not None and sum(j.freq_mean_khz is not None for j in joined) >= 3:
        verdicts.append(coupling_check(joined, coupling_threshold))
    return verdicts


def exit_code(verdicts):
    return 0 if all(v.passed for v in verdicts) else 1


def write_verdicts(path, verdicts):
    with open(path, "w") as f:
        for v in verdicts:
            f.write(v.line() + "\n")
