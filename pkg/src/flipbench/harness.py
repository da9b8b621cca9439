"""Measurement protocol: warm-up, one pinned worker per core, timed kernel calls."""

import logging
import os
import platform
import shutil
import socket
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from flipbench import datagen, kernels, rng
from flipbench.datagen import InitSpec
from flipbench.errors import KernelError, PinError
from flipbench.freqmon import DEFAULT_INTERVAL_MS, MonitorThread, OsFilesProvider
from flipbench.traces import DurationSample, RunArtifacts, TraceWriter, write_metadata

log = logging.getLogger(__name__)

DEFAULT_WARMUP_SECONDS = 600
DEFAULT_ORDER = 2048
DEFAULT_CALLS = 50


@dataclass
class ExperimentConfig:
    cores: list
    init: InitSpec
    output_dir: Path
    node_label: str = field(default_factory=socket.gethostname)
    matrix_order: int = DEFAULT_ORDER
    calls_per_core: int = DEFAULT_CALLS
    kernel: str = "blocked"
    block: int = 64
    warmup_seconds: int = DEFAULT_WARMUP_SECONDS
    monitor_interval_ms: int = DEFAULT_INTERVAL_MS
    seed: int = 0
    use_stress: bool = False
    queue_size: int = 65536

    def __post_init__(self):
        self.cores = [int(c) for c in self.cores]
        self.output_dir = Path(self.output_dir)
        if not self.cores:
            raise ValueError("at least one core is required")
        if len(set(self.cores)) != len(self.cores):
            raise ValueError(f"cores must be distinct: {self.cores}")
        if self.calls_per_core < 1:
            raise ValueError("calls_per_core must be >= 1")
        if self.matrix_order < 2:
            raise ValueError("matrix_order must be >= 2")
        if self.warmup_seconds < 0:
            raise ValueError("warmup_seconds must be >= 0")
        self.block = min(self.block, self.matrix_order)
        if self.block < 1:
            raise ValueError("block must be >= 1")
        kernels.get_kernel(self.kernel)

    def resolved(self):
        return {
            "node": self.node_label,
            "cores": ",".join(map(str, self.cores)),
            "matrix_order": self.matrix_order,
            "calls_per_core": self.calls_per_core,
            "scheme": self.init.canonical,
            "kernel": self.kernel,
            "block": self.block,
            "warmup_seconds": self.warmup_seconds,
            "monitor_interval_ms": self.monitor_interval_ms,
            "seed": self.seed,
            "use_stress": self.use_stress,
            "output_dir": str(self.output_dir),
        }


def check_core(core):
    """Raise PinError unless ``core`` exists on this machine."""
    known = os.sched_getaffinity(0) if hasattr(os, "sched_getaffinity") else set()
    if core in known or 0 <= core < (os.cpu_count() or 0):
        return
    raise PinError(f"core {core} does not exist (available: {sorted(known)})")


def pin_worker(core):
    """Restrict the calling thread to ``core`` and return the resulting affinity.

    Returns None when the platform has no affinity API; the caller records
    that as degraded mode.
    """
    if not hasattr(os, "sched_setaffinity"):
        log.warning("CPU pinning unsupported on %s", platform.system())
        return None
    check_core(core)
    try:
        os.sched_setaffinity(0, {core})
    except OSError as e:
        raise PinError(f"cannot pin to core {core}: {e}") from None
    return os.sched_getaffinity(0)


@numba.njit(nogil=True, cache=True)
def _spin(n):
    x = 1.0
    y = 0.999999
    for _ in range(n):
        x = x * y + 1e-9
    return x


_SPIN_CHUNK = 1 << 20


def warmup(seconds, cores=None, use_stress=False):
    """Busy arithmetic on every core for ``seconds`` of wall time.

    Returns ``{core: loop_count}``. With ``use_stress`` the external
    ``stress`` binary is run instead and counts are zero.
    """
    cores = list(cores) if cores is not None else [0]
    if seconds <= 0:
        return {c: 0 for c in cores}
    if use_stress:
        exe = shutil.which("stress")
        if exe is None:
            raise FileNotFoundError("stress binary not found on PATH")
        subprocess.run([exe, "--cpu", str(len(cores)), "--timeout", f"{int(seconds)}s"], check=True)
        return {c: 0 for c in cores}
    _spin(1)
    deadline = time.monotonic_ns() + int(seconds * 1e9)
    counts = {}

    def work(core):
        try:
            pin_worker(core)
        except PinError as e:
            log.warning("warm-up unpinned: %s", e)
        n = 0
        while time.monotonic_ns() < deadline:
            _spin(_SPIN_CHUNK)
            n += _SPIN_CHUNK
        counts[core] = n

    threads = [threading.Thread(target=work, args=(c,)) for c in cores]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return counts


def _fill(dst, src):
    np.copyto(dst, src)


class _Worker(threading.Thread):
    def __init__(self, cfg, core, writer, abort):
        super().__init__(name=f"worker-{core}")
        self.cfg = cfg
        self.core = core
        self.writer = writer
        self.abort = abort
        self.error = None
        self.affinity = None
        self.calls_done = 0

    def run(self):
        cfg = self.cfg
        try:
            self.affinity = pin_worker(self.core)
        except PinError as e:
            self.error = e
            self.abort.set()
            return
        kernel = kernels.get_kernel(cfg.kernel)
        a, b, c0 = (m.as_2d() for m in datagen.generate_operands(cfg.init, cfg.matrix_order))
        c = np.empty_like(c0)
        args = kernels.GemmArgs(1.0, a, b, 1.0, c)
        mask = cfg.init.mask_bits
        scheme = cfg.init.canonical
        for i in range(cfg.calls_per_core):
            if self.abort.is_set():
                return
            _fill(c, c0)
            try:
                t0 = time.monotonic_ns()
                kernel(args, cfg.block)
                t1 = time.monotonic_ns()
            except Exception as e:
                self.error = KernelError(f"kernel {cfg.kernel!r} failed on core {self.core}, call {i}: {e}")
                self.abort.set()
                return
            self.writer.put_duration(DurationSample(
                node=cfg.node_label,
                core=self.core,
                call_index=i,
                scheme=scheme,
                mask_bits=mask,
                seed=cfg.seed,
                matrix_order=cfg.matrix_order,
                kernel=cfg.kernel,
                start_ns=t0,
                duration_ns=max(1, t1 - t0),
            ))
            self.calls_done += 1


def run_calibration(config, provider=None):
    """Run the full protocol and return the written trace files.

    Operands are built once per core; C is restored from its initial
    content before every call, outside the timed region.
    """
    cfg = config
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(cfg.output_dir, os.W_OK):
        raise PermissionError(f"output directory {cfg.output_dir} is not writable")
    run_id = f"{cfg.node_label}-{time.strftime('%Y%m%dT%H%M%S')}-{os.getpid()}"
    art = RunArtifacts.in_dir(cfg.output_dir, run_id)
    for core in cfg.cores:
        check_core(core)
    provider = provider or OsFilesProvider()
    kernels.warm_jit()

    meta = {
        "run_id": run_id,
        "kind": "run",
        "clock": "monotonic",
        "generator": rng.ALGORITHM_ID,
        "kernel": cfg.kernel,
        "c_refresh": "per-call, untimed",
        "provider": provider.kind,
        "cores_per_package": 16,
        "wall_clock_start": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "monotonic_start_ns": time.monotonic_ns(),
    }
    meta.update({f"config.{k}": v for k, v in cfg.resolved().items()})

    counts = warmup(cfg.warmup_seconds, cfg.cores, cfg.use_stress)
    meta["warmup_loops"] = ",".join(f"{c}:{n}" for c, n in sorted(counts.items()))

    abort = threading.Event()
    writer = TraceWriter(art.durations_path, art.freq_path, maxsize=cfg.queue_size)
    mon = MonitorThread(provider, cfg.cores, cfg.monitor_interval_ms, writer.put_freq).start()
    workers = [_Worker(cfg, core, writer, abort) for core in cfg.cores]
    try:
        for w in workers:
            w.start()
        for w in workers:
            w.join()
    finally:
        report = mon.stop()
        writer.close()

    errors = [w.error for w in workers if w.error is not None]
    degraded = [w.core for w in workers if w.affinity is None and w.error is None]
    meta["pinning"] = "degraded" if degraded else "ok"
    meta["monitor_ticks"] = report.ticks
    meta["monitor_missed_ticks"] = report.missed_ticks
    meta["monitor_gaps"] = len(report.gaps)
    meta["writer_overflows"] = writer.overflows
    meta["durations_rows"] = writer.written[0]
    meta["freq_rows"] = writer.written[1]
    if errors:
        meta["status"] = "aborted"
        meta["error"] = "; ".join(str(e).replace("\n", " ") for e in errors)
    elif writer.overflows:
        meta["status"] = "partial"
    else:
        meta["status"] = "ok"
    write_metadata(art.metadata_path, meta)
    if errors:
        raise errors[0]
    return art
