"""``flipbench`` command-line entry point.

Subcommands: generate, run, monitor, simulate, analyze, report.
Exit codes: 0 success / all verdicts pass, 1 a verdict failed, 2 bad input.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from flipbench import analysis, datagen, flipmodel, freqmon, harness, report, rng
from flipbench.config import load_config
from flipbench.errors import ConfigError, FlipbenchError
from flipbench.traces import FREQ_FILE, RunArtifacts, read_metadata, write_metadata

log = logging.getLogger("flipbench")

DEFAULT_OUTPUT = "flipbench-out"

# flag dest -> (config section, built-in default, converter)
OPTIONS = {
    "order": ("run", None, int),
    "calls": ("run", None, int),
    "cores": ("run", "0", str),
    "scheme": ("run", None, str),
    "schemes": ("run", None, str),
    "seed": ("run", 0, int),
    "kernel": ("run", "blocked", str),
    "block": ("run", 64, int),
    "warmup_seconds": ("run", harness.DEFAULT_WARMUP_SECONDS, float),
    "monitor_interval": ("run", freqmon.DEFAULT_INTERVAL_MS, int),
    "noise": ("run", 0.0, float),
    "output": ("run", None, str),
    "node": ("run", None, str),
    "active_cores": ("run", None, int),
    "trace_cores": ("run", None, str),
    "duration": ("run", 10.0, float),
    "use_stress": ("run", False, lambda v: str(v).lower() in ("1", "true", "yes", "on")),
    "provider": ("run", "os", str),
    "pairs": ("run", 10_000, int),
    "group_by": ("analyze", ",".join(analysis.DEFAULT_GROUP_BY), str),
    "monotonicity_threshold": ("analyze", analysis.MONOTONICITY_THRESHOLD, float),
    "coupling_threshold": ("analyze", analysis.COUPLING_THRESHOLD, float),
    "cores_per_package": ("analyze", analysis.CORES_PER_PACKAGE, int),
}


class UsageError(FlipbenchError):
    pass


def parse_cores(text):
    """``0,2,4-7`` -> [0, 2, 4, 5, 6, 7]."""
    cores = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if sep:
            cores.extend(range(int(lo), int(hi) + 1))
        else:
            cores.append(int(part))
    if not cores:
        raise UsageError(f"no cores in {text!r}")
    return cores


class Resolved:
    """Flag values overlaid on config-file values overlaid on defaults."""

    def __init__(self, args, file_cfg):
        self.args = args
        self.file = file_cfg
        self.values = {}

    def __getattr__(self, name):
        if name not in OPTIONS:
            raise AttributeError(name)
        if name in self.values:
            return self.values[name]
        section, default, conv = OPTIONS[name]
        v = getattr(self.args, name, None)
        if v is None:
            v = self.file.get(section, {}).get(name)
        if v is None:
            v = default
        if v is not None:
            try:
                v = conv(v)
            except ValueError:
                raise UsageError(f"bad value for {name}: {v!r}") from None
        self.values[name] = v
        return v

    def model(self):
        try:
            return flipmodel.model_from_mapping(self.file.get("model", {}))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad [model] section: {e}") from None

    def output_dir(self):
        return Path(self.output or os.environ.get("FLIPBENCH_OUTPUT") or DEFAULT_OUTPUT)

    def echo(self):
        return {f"cli.{k}": "" if v is None else v for k, v in sorted(self.values.items())}


def _add(p, *names, **kw):
    kw.setdefault("default", None)
    p.add_argument(*names, **kw)


def build_parser():
    parser = argparse.ArgumentParser(prog="flipbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *flags):
        _add(p, "--config", help="config file with [run]/[model]/[analyze] sections")
        helps = {
            "order": ("--order", dict(type=int, help="matrix order N")),
            "calls": ("--calls", dict(type=int, help="kernel calls per core")),
            "cores": ("--cores", dict(help="core list, e.g. 0,2,4-7")),
            "scheme": ("--scheme", dict(help="constant:<x> | sequential | random | masked:<0..53>")),
            "schemes": ("--schemes", dict(help="comma-separated list of schemes")),
            "seed": ("--seed", dict(type=int, help="64-bit generator seed")),
            "kernel": ("--kernel", dict(help="naive | blocked")),
            "block": ("--block", dict(type=int, help="tile size of the blocked kernel")),
            "warmup_seconds": ("--warmup-seconds", dict(type=float, help="warm-up duration (default 600)")),
            "monitor_interval": ("--monitor-interval", dict(type=int, help="frequency sampling period in ms (default 1000)")),
            "noise": ("--noise", dict(type=float, help="relative duration noise of the simulator")),
            "output": ("--output", dict(help="output directory (default $FLIPBENCH_OUTPUT or ./flipbench-out)")),
            "node": ("--node", dict(help="node label written to traces")),
            "active_cores": ("--active-cores", dict(type=int, help="cores sharing the simulated power budget")),
            "trace_cores": ("--trace-cores", dict(help="cores written to simulated traces")),
            "duration": ("--duration", dict(type=float, help="monitor run time in seconds")),
            "use_stress": ("--use-stress", dict(action="store_const", const="true", help="warm up with the external stress binary")),
            "provider": ("--provider", dict(help="frequency provider: os | simulated")),
            "pairs": ("--pairs", dict(type=int, help="pairs for the sampled Hamming statistic")),
            "group_by": ("--group-by", dict(help="summary keys from node,core,package,scheme,mask_bits")),
            "monotonicity_threshold": ("--monotonicity-threshold", dict(type=float, help="max rho for the mask check")),
            "coupling_threshold": ("--coupling-threshold", dict(type=float, help="max rho for frequency/duration coupling")),
            "cores_per_package": ("--cores-per-package", dict(type=int, help="cores per CPU package for faceting")),
        }
        for f in flags:
            flag, kw = helps[f]
            _add(p, flag, dest=f, **kw)

    p = sub.add_parser("generate", help="emit a matrix and its bit-entropy statistics")
    common(p, "scheme", "order", "seed", "pairs", "output")
    p = sub.add_parser("run", help="measure kernel durations on pinned cores")
    common(p, "order", "calls", "cores", "scheme", "seed", "kernel", "block", "warmup_seconds",
           "monitor_interval", "output", "node", "use_stress", "provider")
    p = sub.add_parser("monitor", help="sample core frequencies to a CSV file")
    common(p, "cores", "monitor_interval", "duration", "output", "provider")
    p = sub.add_parser("simulate", help="write synthetic traces from the power model")
    common(p, "schemes", "scheme", "order", "calls", "seed", "noise", "active_cores", "trace_cores",
           "node", "kernel", "monitor_interval", "output")
    p = sub.add_parser("analyze", help="summaries and verdicts over a trace directory")
    common(p, "output", "group_by", "monotonicity_threshold", "coupling_threshold", "cores_per_package")
    p = sub.add_parser("report", help="SVG figures and text report for a trace directory")
    common(p, "output", "group_by", "monotonicity_threshold", "coupling_threshold", "cores_per_package")
    return parser


def _provider(r, cores):
    if r.provider == "os":
        return freqmon.OsFilesProvider()
    if r.provider == "simulated":
        return freqmon.SimulatedProvider(r.model(), alpha=0.0, active_cores=len(cores))
    raise UsageError(f"unknown provider {r.provider!r}")


def cmd_generate(r):
    if not r.scheme:
        raise UsageError("--scheme is required")
    spec = datagen.parse_init_spec(r.scheme, r.seed)
    order = r.order or 4
    m = datagen.generate(spec, order)
    stats = datagen.entropy_stats(m, r.pairs, r.seed) if m.data.size >= 2 else None
    lines = [
        f"scheme={spec.canonical}",
        f"order={order}",
        f"seed={r.seed}",
        f"generator={rng.ALGORITHM_ID}",
    ]
    if stats is not None:
        lines += [
            f"mean_adjacent_hamming={stats.mean_adjacent_hamming!r}",
            f"mean_sampled_pairwise_hamming={stats.mean_sampled_pairwise_hamming!r}",
            f"sample_pairs={stats.sample_pairs}",
        ]
    lines += [" ".join(repr(float(x)) for x in row) for row in m.as_2d()]
    text = "\n".join(lines) + "\n"
    if r.output:
        out = Path(r.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "matrix.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_run(r):
    if not r.scheme:
        raise UsageError("--scheme is required")
    cores = parse_cores(r.cores)
    cfg = harness.ExperimentConfig(
        cores=cores,
        init=datagen.parse_init_spec(r.scheme, r.seed),
        output_dir=r.output_dir(),
        matrix_order=r.order or harness.DEFAULT_ORDER,
        calls_per_core=r.calls or harness.DEFAULT_CALLS,
        kernel=r.kernel,
        block=r.block,
        warmup_seconds=r.warmup_seconds,
        monitor_interval_ms=r.monitor_interval,
        seed=r.seed,
        use_stress=r.use_stress,
        **({"node_label": r.node} if r.node else {}),
    )
    art = harness.run_calibration(cfg, _provider(r, cores))
    _append_echo(art.metadata_path, r)
    print(f"run {art.run_id}: {art.durations_path}")
    return 0


def cmd_monitor(r):
    cores = parse_cores(r.cores)
    out = r.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    samples, rep = freqmon.monitor_to_file(_provider(r, cores), cores, r.monitor_interval, out / FREQ_FILE,
                                           duration_s=r.duration)
    print(f"{len(samples)} samples, {len(rep.gaps)} gaps, {rep.missed_ticks} missed ticks -> {out / FREQ_FILE}")
    return 0


def cmd_simulate(r):
    text = r.schemes or r.scheme
    if not text:
        raise UsageError("--schemes is required")
    specs = tuple(datagen.parse_init_spec(t, r.seed) for t in text.split(",") if t.strip())
    kwargs = {}
    if r.active_cores:
        kwargs["active_cores"] = r.active_cores
    if r.trace_cores:
        kwargs["trace_cores"] = tuple(parse_cores(r.trace_cores))
    if r.node:
        kwargs["node_label"] = r.node
    if r.args.monitor_interval is not None or "monitor_interval" in r.file.get("run", {}):
        kwargs["monitor_interval_ns"] = r.monitor_interval * 1_000_000
    cfg = flipmodel.SimConfig(
        model=r.model(),
        schemes=specs,
        calls=r.calls or 20,
        matrix_order=r.order or 64,
        noise_rel=r.noise,
        seed=r.seed,
        kernel=r.kernel,
        **kwargs,
    )
    art = flipmodel.simulate_experiment(cfg, r.output_dir())
    _append_echo(art.metadata_path, r)
    print(f"simulated {art.run_id}: {art.durations_path}")
    return 0


def _append_echo(meta_path, r):
    meta = read_metadata(meta_path)
    meta.update(r.echo())
    write_metadata(meta_path, meta)


def _analyze(r):
    art = RunArtifacts.load(r.output_dir())
    meta = read_metadata(art.metadata_path)
    cpp = int(meta.get("cores_per_package", r.cores_per_package))
    if r.args.cores_per_package is not None or "analyze" in r.file:
        cpp = r.cores_per_package
    durations = analysis.read_durations(art.durations_path)
    joined = None
    if art.freq_path.exists():
        freqs = analysis.read_freqs(art.freq_path)
        if freqs:
            joined = analysis.join_freq_durations(durations, freqs, meta)
    keys = tuple(k.strip() for k in r.group_by.split(",") if k.strip())
    rows = analysis.summarize(durations, keys, joined, cpp)
    verdicts = analysis.applicable_verdicts(rows, joined, r.monotonicity_threshold, r.coupling_threshold)
    return art, rows, verdicts, cpp


def cmd_analyze(r):
    art, rows, verdicts, _ = _analyze(r)
    out = art.durations_path.parent
    analysis.write_summary(out / "summary.csv", rows)
    analysis.write_verdicts(out / "verdicts.txt", verdicts)
    for v in verdicts:
        print(v.line())
    if not verdicts:
        print("no applicable verdicts")
    return analysis.exit_code(verdicts)


def cmd_report(r):
    art, rows, verdicts, cpp = _analyze(r)
    out = art.durations_path.parent
    freq = art.freq_path if art.freq_path.exists() and analysis.read_freqs(art.freq_path) else None
    paths = report.render_all(art.durations_path, freq, out, art.run_id, cpp)
    rpt = out / f"report_{art.run_id}.txt"
    report.write_text_report(rpt, rows, verdicts, art.run_id)
    for p in paths + [rpt]:
        print(p)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "monitor": cmd_monitor,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "report": cmd_report,
}


def dispatch(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_cfg = load_config(args.config) if args.config else {}
        return COMMANDS[args.command](Resolved(args, file_cfg))
    except (FlipbenchError, ValueError, OSError) as e:
        print(f"flipbench {args.command}: error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
