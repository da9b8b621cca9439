"""SVG figures and the text report.

Panels are laid out with one row per node and one column per CPU package.
Series are schemes, or mask sizes when the traces come from a mask sweep.
"""

import bisect
import enum
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from flipbench import analysis  # noqa: E402
from flipbench.errors import ReportError  # noqa: E402
from flipbench.traces import read_durations, read_freqs  # noqa: E402

_RC = {
    "svg.hashsalt": "flipbench",
    "svg.fonttype": "path",
    "figure.dpi": 72,
}


class PlotKind(enum.Enum):
    DURATION_TIMELINE = "DurationTimeline"
    DURATION_BOX = "DurationBox"
    FREQ_TIMELINE = "FreqTimeline"
    FREQ_DENSITY = "FreqDensity"


@dataclass
class PlotSpec:
    kind: PlotKind
    durations_path: Path
    output_path: Path
    freq_path: Path | None = None
    cores_per_package: int = analysis.CORES_PER_PACKAGE


@dataclass
class RenderResult:
    """What was drawn, per panel and series, for cross-checking against summaries."""

    path: Path
    panels: dict = field(default_factory=dict)


def _series_label(s):
    return f"mask {s.mask_bits}" if s.mask_bits is not None else s.scheme


def _series_sort(s):
    return (0, s.mask_bits) if s.mask_bits is not None else (1, s.scheme)


def _facet(node, core, cpp):
    return (node, f"p{core // cpp}")


def _layout(facets):
    nodes = sorted({f[0] for f in facets})
    pkgs = sorted({f[1] for f in facets})
    fig, axes = plt.subplots(len(nodes), len(pkgs), figsize=(4.5 * len(pkgs), 3.2 * len(nodes)),
                             squeeze=False, sharey=True)
    where = {}
    for i, n in enumerate(nodes):
        for j, p in enumerate(pkgs):
            axes[i][j].set_title(f"{n} / {p}", fontsize=9)
            where[(n, p)] = axes[i][j]
    for j in range(len(pkgs)):
        for i in range(len(nodes)):
            if (nodes[i], pkgs[j]) not in facets:
                axes[i][j].set_visible(False)
    return fig, where


def _colors(labels):
    cmap = plt.get_cmap("viridis")
    k = max(1, len(labels) - 1)
    return {lab: cmap(i / k) for i, lab in enumerate(labels)}


def _series_order(samples):
    seen = {}
    for s in sorted(samples, key=_series_sort):
        seen.setdefault(_series_label(s), None)
    return list(seen)


def label_freq_samples(durations, freqs):
    """Tag each frequency sample with the series of the latest call started on its core."""
    starts = defaultdict(list)
    for s in durations:
        starts[s.core].append((s.start_ns, _series_label(s), s.node))
    for v in starts.values():
        v.sort()
    keys = {c: [t for t, _, _ in v] for c, v in starts.items()}
    out = []
    for f in freqs:
        ts = keys.get(f.core)
        if not ts:
            continue
        i = bisect.bisect_right(ts, f.timestamp_ns) - 1
        if i < 0:
            continue
        _, label, node = starts[f.core][i]
        out.append((node, f, label))
    return out


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": "flipbench"})
    plt.close(fig)


def render(spec):
    """Draw one figure; raises ReportError without writing on empty input."""
    if not isinstance(spec.kind, PlotKind):
        try:
            spec.kind = PlotKind(spec.kind)
        except ValueError:
            raise ReportError(f"unknown plot kind {spec.kind!r}") from None
    durations = read_durations(spec.durations_path)
    if not durations:
        raise ReportError(f"no duration rows in {spec.durations_path}")
    cpp = spec.cores_per_package
    with matplotlib.rc_context(_RC):
        if spec.kind is PlotKind.DURATION_BOX:
            return _duration_box(spec, durations, cpp)
        if spec.kind is PlotKind.DURATION_TIMELINE:
            return _duration_timeline(spec, durations, cpp)
        if spec.freq_path is None:
            raise ReportError(f"{spec.kind.value} needs a frequency trace")
        freqs = read_freqs(spec.freq_path)
        labelled = label_freq_samples(durations, freqs)
        if not labelled:
            raise ReportError(f"no frequency samples overlap the calls in {spec.durations_path}")
        if spec.kind is PlotKind.FREQ_TIMELINE:
            return _freq_timeline(spec, durations, labelled, cpp)
        return _freq_density(spec, durations, labelled, cpp)


def _duration_box(spec, durations, cpp):
    rows = analysis.summarize(durations, group_by=("node", "package", "scheme", "mask_bits"),
                              cores_per_package=cpp)
    labels = _series_order(durations)
    facets = {r.facet for r in rows}
    fig, axes = _layout(facets)
    colors = _colors(labels)
    result = RenderResult(Path(spec.output_path))
    by_facet = defaultdict(dict)
    for r in rows:
        lab = f"mask {r.mask_bits}" if r.mask_bits is not None else r.scheme
        by_facet[r.facet][lab] = r
    for facet, series in sorted(by_facet.items()):
        ax = axes[facet]
        present = [lab for lab in labels if lab in series]
        stats = [{
            "label": lab,
            "whislo": series[lab].min_ns / 1e9,
            "q1": series[lab].q1_ns / 1e9,
            "med": series[lab].median_ns / 1e9,
            "q3": series[lab].q3_ns / 1e9,
            "whishi": series[lab].max_ns / 1e9,
            "fliers": [],
        } for lab in present]
        arts = ax.bxp(stats, showfliers=False, patch_artist=True)
        for patch, lab in zip(arts["boxes"], present):
            patch.set_facecolor(colors[lab])
        ax.tick_params(axis="x", labelrotation=30, labelsize=7)
        ax.set_ylabel("duration (s)")
        drawn = {}
        for k, lab in enumerate(present):
            drawn[lab] = {
                "whislo": arts["whiskers"][2 * k].get_ydata()[1],
                "q1": arts["whiskers"][2 * k].get_ydata()[0],
                "med": arts["medians"][k].get_ydata()[0],
                "q3": arts["whiskers"][2 * k + 1].get_ydata()[0],
                "whishi": arts["whiskers"][2 * k + 1].get_ydata()[1],
            }
        result.panels[facet] = drawn
    fig.suptitle("dgemm duration distribution")
    fig.tight_layout()
    _save(fig, spec.output_path)
    return result


def _legend(fig, colors):
    handles = [plt.Line2D([], [], color=c, marker="o", linestyle="", label=lab) for lab, c in colors.items()]
    fig.legend(handles=handles, loc="lower center", ncol=min(len(handles), 6), fontsize=7, frameon=False)


def _duration_timeline(spec, durations, cpp):
    labels = _series_order(durations)
    colors = _colors(labels)
    groups = defaultdict(list)
    for s in durations:
        groups[(_facet(s.node, s.core, cpp), _series_label(s))].append(s)
    fig, axes = _layout({f for f, _ in groups})
    result = RenderResult(Path(spec.output_path))
    for (facet, lab), ss in sorted(groups.items()):
        ss.sort(key=lambda s: (s.start_ns, s.core))
        t0 = ss[0].start_ns
        x = np.array([(s.start_ns - t0) / 1e9 for s in ss])
        y = np.array([s.duration_ns / 1e9 for s in ss])
        axes[facet].plot(x, y, linestyle="", marker=".", markersize=3, color=colors[lab])
        axes[facet].set_xlabel("time since series start (s)")
        axes[facet].set_ylabel("duration (s)")
        result.panels.setdefault(facet, {})[lab] = (x, y)
    _legend(fig, colors)
    fig.suptitle("dgemm durations over time")
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    _save(fig, spec.output_path)
    return result


def _freq_timeline(spec, durations, labelled, cpp):
    labels = _series_order(durations)
    colors = _colors(labels)
    groups = defaultdict(list)
    for node, f, lab in labelled:
        groups[(_facet(node, f.core, cpp), lab, f.core)].append(f)
    fig, axes = _layout({g[0] for g in groups})
    result = RenderResult(Path(spec.output_path))
    series_t0 = {}
    for (facet, lab, core), fs in sorted(groups.items()):
        series_t0[(facet, lab)] = min(series_t0.get((facet, lab), fs[0].timestamp_ns), fs[0].timestamp_ns)
    for (facet, lab, core), fs in sorted(groups.items()):
        t0 = series_t0[(facet, lab)]
        x = np.array([(f.timestamp_ns - t0) / 1e9 for f in fs])
        y = np.array([f.frequency_khz / 1e6 for f in fs])
        axes[facet].step(x, y, where="post", color=colors[lab], linewidth=1)
        axes[facet].set_xlabel("time since series start (s)")
        axes[facet].set_ylabel("frequency (GHz)")
        panel = result.panels.setdefault(facet, {})
        px, py = panel.get(lab, (np.array([]), np.array([])))
        panel[lab] = (np.concatenate([px, x]), np.concatenate([py, y]))
    _legend(fig, colors)
    fig.suptitle("core frequency over time")
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    _save(fig, spec.output_path)
    return result


def _freq_density(spec, durations, labelled, cpp):
    labels = _series_order(durations)
    colors = _colors(labels)
    groups = defaultdict(list)
    for node, f, lab in labelled:
        groups[(_facet(node, f.core, cpp), lab)].append(f.frequency_khz / 1e6)
    fig, axes = _layout({g[0] for g in groups})
    result = RenderResult(Path(spec.output_path))
    all_vals = np.concatenate([np.asarray(v) for v in groups.values()])
    lo, hi = float(all_vals.min()) - 0.05, float(all_vals.max()) + 0.05
    bins = np.linspace(lo, hi, 41)
    for (facet, lab), vals in sorted(groups.items()):
        dens, edges = np.histogram(vals, bins=bins, density=True)
        axes[facet].stairs(dens, edges, color=colors[lab], linewidth=1.2)
        axes[facet].set_xlabel("frequency (GHz)")
        axes[facet].set_ylabel("density")
        result.panels.setdefault(facet, {})[lab] = (dens, edges)
    _legend(fig, colors)
    fig.suptitle("core frequency distribution")
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    _save(fig, spec.output_path)
    return result


def render_all(durations_path, freq_path, out_dir, run_id, cores_per_package=analysis.CORES_PER_PACKAGE):
    """Render every figure kind the inputs allow; returns the written paths."""
    out_dir = Path(out_dir)
    paths = []
    for kind in PlotKind:
        if kind in (PlotKind.FREQ_TIMELINE, PlotKind.FREQ_DENSITY) and freq_path is None:
            continue
        path = out_dir / f"{kind.value}_{run_id}.svg"
        render(PlotSpec(kind, durations_path, path, freq_path, cores_per_package))
        paths.append(path)
    return paths


_COLUMNS = [
    ("node", 12), ("group_core", 10), ("scheme", 18), ("mask_bits", 9), ("n", 6),
    ("min_ns", 14), ("q1_ns", 14), ("median_ns", 14), ("q3_ns", 14), ("max_ns", 14),
    ("mean_ns", 14), ("freq_median_khz", 15),
]


def _cell(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.1f}"
    return str(v)


def text_report(summaries, verdicts, run_id=""):
    """Fixed-width summary table followed by one line per verdict."""
    lines = [f"flipbench report {run_id}".rstrip(), ""]
    lines.append(" ".join(name.rjust(w) for name, w in _COLUMNS))
    for r in summaries:
        lines.append(" ".join(_cell(getattr(r, name)).rjust(w) for name, w in _COLUMNS))
    lines.append("")
    lines.append("verdicts:")
    lines.extend(v.line() for v in verdicts)
    return "\n".join(lines) + "\n"


def write_text_report(path, summaries, verdicts, run_id=""):
    Path(path).write_text(text_report(summaries, verdicts, run_id))
