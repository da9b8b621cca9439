"""Switching-activity model of data-dependent matmul speed.

Operand bit flips set an activity factor ``alpha``; dynamic power is
``active_cores * alpha * c_dyn * f * V(f)**2`` with an affine voltage curve;
the core settles on the highest ladder frequency whose total power fits
under the cap; call duration follows from the frequency.

Every constant here belongs to the model, not to measured hardware. The
ceiling (3.7 GHz) and the 16-core full-activity operating point (2.4 GHz)
are the two anchors; ``c_dyn`` is fitted to the latter by
:func:`calibrate_c_dyn` and the fitted value is committed as the default.
"""

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from flipbench import datagen, rng
from flipbench.datagen import InitSpec, Scheme
from flipbench.kernels import flop_count
from flipbench.traces import DurationSample, FreqSample, RunArtifacts, TraceWriter, write_metadata

DEFAULT_LADDER_KHZ = tuple(range(1_000_000, 3_700_001, 100_000))

# Anchors: 3.7 GHz ceiling, 2.4 GHz with 16 busy cores at full activity.
ANCHOR_FREQUENCY_KHZ = 2_400_000
ANCHOR_ACTIVE_CORES = 16
CEILING_KHZ = 3_700_000

# Output of calibrate_c_dyn(PowerModel()) with the defaults below;
# scripts/calibrate_model.py regenerates it.
CALIBRATED_C_DYN = 3.35226402173311e-09


@dataclass(frozen=True)
class PowerModel:
    freq_ladder_khz: tuple = DEFAULT_LADDER_KHZ
    v0: float = 0.6  # volts
    v1: float = 0.12  # volts per GHz
    c_dyn: float = CALIBRATED_C_DYN  # farads per core
    p_static_w: float = 20.0
    power_cap_w: float = 125.0
    flops_per_cycle: int = 32
    alpha_floor: float = 0.05
    activity_scale: float = 2.0
    efficiency: float = 0.85

    def __post_init__(self):
        ladder = tuple(int(f) for f in self.freq_ladder_khz)
        object.__setattr__(self, "freq_ladder_khz", ladder)
        if not ladder:
            raise ValueError("frequency ladder must not be empty")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("frequency ladder must be strictly increasing")
        if ladder[0] <= 0:
            raise ValueError("ladder frequencies must be positive")
        if any(self.voltage(f) <= 0 for f in ladder):
            raise ValueError("voltage must be positive on the whole ladder")
        if not 0 <= self.alpha_floor < 1:
            raise ValueError("alpha_floor must be in [0, 1)")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must be in (0, 1]")
        if self.c_dyn < 0 or self.flops_per_cycle < 1:
            raise ValueError("c_dyn must be >= 0 and flops_per_cycle >= 1")

    def voltage(self, frequency_khz):
        return self.v0 + self.v1 * frequency_khz / 1e6

    def dynamic_power(self, alpha, frequency_khz, active_cores):
        v = self.voltage(frequency_khz)
        return active_cores * alpha * self.c_dyn * frequency_khz * 1e3 * v * v

    def power(self, alpha, frequency_khz, active_cores):
        return self.p_static_w + self.dynamic_power(alpha, frequency_khz, active_cores)

    def as_dict(self):
        d = asdict(self)
        d["freq_ladder_khz"] = list(self.freq_ladder_khz)
        return d


def model_from_mapping(values, base=None):
    """Build a PowerModel from string values (config file ``[model]`` section)."""
    base = base or PowerModel()
    known = {f.name: f for f in fields(PowerModel)}
    kwargs = {}
    for key, text in values.items():
        if key not in known:
            raise KeyError(key)
        if key == "freq_ladder_khz":
            kwargs[key] = _parse_ladder(str(text))
        elif key == "flops_per_cycle":
            kwargs[key] = int(text)
        else:
            kwargs[key] = float(text)
    return replace(base, **kwargs)


def _parse_ladder(text):
    """``1000000:3700000:100000`` (start:stop:step, inclusive) or a comma list."""
    if ":" in text:
        start, stop, step = (int(x) for x in text.split(":"))
        return tuple(range(start, stop + 1, step))
    return tuple(int(x) for x in text.split(","))


class OperatingPoint(NamedTuple):
    frequency_khz: int
    power_w: float
    power_limited: bool


def operating_point(model, alpha, active_cores):
    """Highest ladder frequency whose power fits under the cap.

    If no rung fits, the ladder minimum is returned with ``power_limited`` set.
    """
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if active_cores < 1:
        raise ValueError("active_cores must be >= 1")
    for f in reversed(model.freq_ladder_khz):
        p = model.power(alpha, f, active_cores)
        if p <= model.power_cap_w:
            return OperatingPoint(f, p, False)
    f = model.freq_ladder_khz[0]
    return OperatingPoint(f, model.power(alpha, f, active_cores), True)


def steady_state_frequency(model, alpha, active_cores):
    return operating_point(model, alpha, active_cores).frequency_khz


def activity_factor(a, b, c, model=None):
    """Switching activity implied by the operands' adjacent-element bit flips.

    ``alpha = clamp(alpha_floor, 1, scale * mean_hamming / 64)`` where
    mean_hamming averages :func:`datagen.mean_adjacent_hamming` over A, B, C.
    """
    model = model or PowerModel()
    if not a.order == b.order == c.order:
        raise ValueError("operands must have the same order")
    h = (datagen.mean_adjacent_hamming(a) + datagen.mean_adjacent_hamming(b) + datagen.mean_adjacent_hamming(c)) / 3
    return min(1.0, max(model.alpha_floor, model.activity_scale * h / 64.0))


def duration_at_frequency(order, frequency_khz, flops_per_cycle, efficiency):
    return flop_count(order) / (frequency_khz * 1e3 * flops_per_cycle * efficiency)


def predict_duration(model, alpha, order, active_cores, efficiency=None):
    """Seconds per call at the steady-state frequency for ``alpha``."""
    if order < 2:
        raise ValueError("order must be >= 2")
    eff = model.efficiency if efficiency is None else efficiency
    if not 0 < eff <= 1:
        raise ValueError("efficiency must be in (0, 1]")
    f = steady_state_frequency(model, alpha, active_cores)
    return duration_at_frequency(order, f, model.flops_per_cycle, eff)


def calibrate_c_dyn(model, anchor_khz=ANCHOR_FREQUENCY_KHZ, active_cores=ANCHOR_ACTIVE_CORES, alpha=1.0):
    """Fit ``c_dyn`` so that ``(alpha, active_cores)`` lands exactly on ``anchor_khz``.

    Any value in ``(c_lo, c_hi]`` selects the anchor rung: ``c_hi`` is where
    the anchor itself stops fitting, ``c_lo`` where the next rung starts to.
    The geometric midpoint keeps the anchor robust to small edits elsewhere.
    """
    ladder = model.freq_ladder_khz
    i = ladder.index(anchor_khz)
    budget = model.power_cap_w - model.p_static_w
    if budget <= 0:
        raise ValueError("power cap must exceed static power")
    unit = replace(model, c_dyn=1.0)
    c_hi = budget / unit.dynamic_power(alpha, anchor_khz, active_cores)
    if i + 1 == len(ladder):
        return c_hi
    c_lo = budget / unit.dynamic_power(alpha, ladder[i + 1], active_cores)
    return math.sqrt(c_lo * c_hi)


# Simulation


@dataclass(frozen=True)
class SimConfig:
    model: PowerModel = field(default_factory=PowerModel)
    # Cores sharing the power budget. At 16 the whole sub-0.49 activity range
    # sits on the 3.7 GHz ceiling; 48 spreads the schemes over the ladder.
    active_cores: int = 48
    schemes: tuple = ()
    calls: int = 20
    matrix_order: int = 64
    noise_rel: float = 0.0
    seed: int = 0
    trace_cores: tuple = (0, 16)
    node_label: str = "sim"
    kernel: str = "blocked"
    monitor_interval_ns: int | None = None

    def __post_init__(self):
        if self.active_cores < 1:
            raise ValueError("active_cores must be >= 1")
        if not 0 <= self.noise_rel < 0.2:
            raise ValueError("noise_rel must be in [0, 0.2)")
        if self.calls < 1 or self.matrix_order < 2:
            raise ValueError("calls must be >= 1 and matrix_order >= 2")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if not self.trace_cores or len(set(self.trace_cores)) != len(self.trace_cores):
            raise ValueError("trace_cores must be non-empty and distinct")

    def resolved(self):
        """Flat, ordered description used for metadata and the run id."""
        items = {
            "active_cores": self.active_cores,
            "schemes": ",".join(s.canonical for s in self.schemes),
            "calls": self.calls,
            "matrix_order": self.matrix_order,
            "noise_rel": repr(self.noise_rel),
            "seed": self.seed,
            "trace_cores": ",".join(map(str, self.trace_cores)),
            "node": self.node_label,
            "kernel": self.kernel,
            "monitor_interval_ns": "" if self.monitor_interval_ns is None else self.monitor_interval_ns,
        }
        for k, v in self.model.as_dict().items():
            if k == "freq_ladder_khz":
                v = ",".join(map(str, v))
            elif isinstance(v, float):
                v = repr(v)
            items[f"model.{k}"] = v
        return items


@dataclass(frozen=True)
class SchemePrediction:
    spec: InitSpec
    alpha: float
    frequency_khz: int
    power_limited: bool
    duration_s: float


def predict_scheme(cfg, spec):
    a, b, c = datagen.generate_operands(spec, cfg.matrix_order)
    alpha = activity_factor(a, b, c, cfg.model)
    op = operating_point(cfg.model, alpha, cfg.active_cores)
    dur = duration_at_frequency(cfg.matrix_order, op.frequency_khz, cfg.model.flops_per_cycle, cfg.model.efficiency)
    return SchemePrediction(spec, alpha, op.frequency_khz, op.power_limited, dur)


_NOISE_SALT = 0xD1B54A32D192ED03


def simulate_experiment(cfg, output_dir):
    """Write synthetic durations/freq traces in the harness formats.

    Scheme blocks run one after the other; within a block every traced core
    performs ``calls`` back-to-back calls. Durations carry multiplicative
    noise ``1 + noise_rel * u`` with ``u`` uniform on [-1, 1) drawn from the
    seed. The simulated monitor ticks on a fixed grid and reports the
    frequency of the latest call started on that core.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    preds = [predict_scheme(cfg, s) for s in cfg.schemes]
    n_cores = len(cfg.trace_cores)
    total = len(preds) * n_cores * cfg.calls
    u = rng.uniform01(cfg.seed ^ _NOISE_SALT, total) * 2.0 - 1.0
    noise = 1.0 + cfg.noise_rel * u
    base_ns = np.repeat([p.duration_s * 1e9 for p in preds], n_cores * cfg.calls)
    dur_ns = np.maximum(1, np.rint(base_ns * noise)).astype(np.int64)

    interval = cfg.monitor_interval_ns or max(1, int(dur_ns.min()) // 2)
    gap = interval

    samples = []
    # per core: list of (start_ns, frequency_khz) in time order
    starts = {core: [] for core in cfg.trace_cores}
    t_block = 0
    k = 0
    for p in preds:
        block_end = t_block
        for core in cfg.trace_cores:
            t = t_block
            for call in range(cfg.calls):
                d = int(dur_ns[k])
                k += 1
                samples.append(DurationSample(
                    node=cfg.node_label,
                    core=core,
                    call_index=len(starts[core]),
                    scheme=p.spec.canonical,
                    mask_bits=p.spec.mask_bits,
                    seed=cfg.seed,
                    matrix_order=cfg.matrix_order,
                    kernel=cfg.kernel,
                    start_ns=t,
                    duration_ns=d,
                ))
                starts[core].append((t, p.frequency_khz))
                t += d + gap
            block_end = max(block_end, t)
        t_block = block_end
    run_end = t_block - gap

    freqs = []
    idx = {core: 0 for core in cfg.trace_cores}
    for tick in range(0, run_end + 1, interval):
        for core in cfg.trace_cores:
            seq = starts[core]
            i = idx[core]
            while i + 1 < len(seq) and seq[i + 1][0] <= tick:
                i += 1
            idx[core] = i
            if seq[i][0] <= tick:
                freqs.append(FreqSample(tick, core, seq[i][1]))

    resolved = cfg.resolved()
    run_id = "sim-" + hashlib.sha256(repr(sorted(resolved.items())).encode()).hexdigest()[:12]
    art = RunArtifacts.in_dir(out, run_id)
    with TraceWriter(art.durations_path, art.freq_path) as w:
        for s in samples:
            w.put_duration(s)
        for f in freqs:
            w.put_freq(f)
    meta = {
        "run_id": run_id,
        "kind": "simulate",
        "status": "ok" if w.overflows == 0 else "partial",
        "clock": "simulated",
        "generator": rng.ALGORITHM_ID,
        "kernel": cfg.kernel,
        "monitor_interval_ns": interval,
        "cores_per_package": ANCHOR_ACTIVE_CORES,
        "writer_overflows": w.overflows,
        "durations_rows": len(samples),
        "freq_rows": len(freqs),
    }
    meta.update({f"config.{k}": v for k, v in resolved.items()})
    for p in preds:
        key = f"predict.{p.spec.canonical}"
        meta[f"{key}.alpha"] = repr(p.alpha)
        meta[f"{key}.frequency_khz"] = p.frequency_khz
        meta[f"{key}.power_limited"] = p.power_limited
        meta[f"{key}.duration_s"] = repr(p.duration_s)
    write_metadata(art.metadata_path, meta)
    return art


def default_schemes(seed=0):
    return (
        InitSpec(Scheme.CONSTANT, value=1.0),
        InitSpec(Scheme.SEQUENTIAL),
        InitSpec(Scheme.RANDOM, seed=seed),
    )


def mask_schemes(masks=(0, 13, 26, 40, 53), seed=0):
    return tuple(InitSpec(Scheme.MASKED, seed=seed, mask_bits=k) for k in masks)
