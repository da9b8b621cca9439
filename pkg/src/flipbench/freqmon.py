"""Per-core frequency sampling through pluggable providers."""

import logging
import os
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from flipbench.errors import ProviderError, UnknownCoreError
from flipbench.traces import FreqSample, read_freqs, write_freqs

log = logging.getLogger(__name__)

SYSFS_CPU = "/sys/devices/system/cpu"
DEFAULT_INTERVAL_MS = 1000
MIN_INTERVAL_MS = 10


class OsFilesProvider:
    """Reads ``cpu{N}/cpufreq/scaling_cur_freq`` (kHz) below ``base``."""

    kind = "os"

    def __init__(self, base=SYSFS_CPU):
        self.base = Path(base)

    def path(self, core):
        return self.base / f"cpu{core}" / "cpufreq" / "scaling_cur_freq"

    def read(self, core):
        if not (self.base / f"cpu{core}").is_dir():
            raise UnknownCoreError(core, f"no such cpu under {self.base}")
        try:
            text = self.path(core).read_text().strip()
        except OSError as e:
            raise ProviderError(core, f"cannot read {self.path(core)}: {e.strerror}") from None
        try:
            khz = int(text)
        except ValueError:
            raise ProviderError(core, f"unparseable frequency {text!r}") from None
        if khz <= 0:
            raise ProviderError(core, f"non-positive frequency {khz}")
        return khz


class SimulatedProvider:
    """Reports the power model's steady-state frequency for a per-core activity."""

    kind = "simulated"

    def __init__(self, model, alpha=0.0, active_cores=1, cores=None):
        self.model = model
        self.alpha = alpha
        self.active_cores = active_cores
        self.cores = None if cores is None else set(cores)

    def read(self, core):
        from flipbench.flipmodel import steady_state_frequency

        if self.cores is not None and core not in self.cores:
            raise UnknownCoreError(core, "not simulated")
        alpha = self.alpha(core) if callable(self.alpha) else self.alpha
        return steady_state_frequency(self.model, alpha, self.active_cores)


class ReplayProvider:
    """Returns recorded frequencies for each core in their original order."""

    kind = "replay"

    def __init__(self, samples):
        if isinstance(samples, (str, os.PathLike)):
            samples = read_freqs(samples)
        self._values = defaultdict(list)
        for s in sorted(samples, key=lambda s: s.timestamp_ns):
            self._values[s.core].append(s.frequency_khz)
        self._pos = defaultdict(int)
        self._lock = threading.Lock()

    def read(self, core):
        with self._lock:
            if core not in self._values:
                raise UnknownCoreError(core, "not in replay trace")
            i = self._pos[core]
            if i >= len(self._values[core]):
                raise ProviderError(core, "replay trace exhausted")
            self._pos[core] = i + 1
            return self._values[core][i]


def make_provider(kind, **kwargs):
    kinds = {"os": OsFilesProvider, "simulated": SimulatedProvider, "replay": ReplayProvider}
    try:
        return kinds[kind](**kwargs)
    except KeyError:
        raise ValueError(f"unknown provider kind {kind!r}") from None


def read_core_frequency(provider, core):
    return provider.read(core)


@dataclass
class MonitorReport:
    samples: int = 0
    ticks: int = 0
    missed_ticks: int = 0
    gaps: list = field(default_factory=list)


def monitor(provider, cores, interval_ms, stop, sink, clock=time.monotonic_ns):
    """Sample every core once per tick until ``stop`` is set.

    Ticks sit on a fixed grid of the monotonic clock starting now. A tick
    that is already a whole interval late is counted as missed and skipped,
    never back-filled. Provider errors become gaps; the loop keeps going.
    """
    if interval_ms < MIN_INTERVAL_MS:
        raise ValueError(f"interval_ms must be >= {MIN_INTERVAL_MS}, got {interval_ms}")
    interval = int(interval_ms) * 1_000_000
    report = MonitorReport()
    next_tick = clock()
    while not stop.is_set():
        now = clock()
        if now < next_tick:
            if stop.wait((next_tick - now) / 1e9):
                break
            now = clock()
        late = (now - next_tick) // interval
        if late > 0:
            report.missed_ticks += late
            next_tick += late * interval
        report.ticks += 1
        for core in cores:
            try:
                khz = provider.read(core)
            except ProviderError as e:
                report.gaps.append((clock(), core, e.reason))
                log.warning("frequency gap: %s", e)
                continue
            sink(FreqSample(clock(), core, khz))
            report.samples += 1
        next_tick += interval
    return report


class MonitorThread:
    """Runs :func:`monitor` in a background thread."""

    def __init__(self, provider, cores, interval_ms, sink):
        self.stop_event = threading.Event()
        self.report = None
        self._args = (provider, list(cores), interval_ms, self.stop_event, sink)
        if interval_ms < MIN_INTERVAL_MS:
            raise ValueError(f"interval_ms must be >= {MIN_INTERVAL_MS}, got {interval_ms}")
        self._thread = threading.Thread(target=self._run, name="freq-monitor", daemon=True)

    def _run(self):
        self.report = monitor(*self._args)

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self.stop_event.set()
        self._thread.join()
        return self.report


def monitor_to_file(provider, cores, interval_ms, path, duration_s=None, stop=None):
    """Standalone monitor writing a freq CSV; runs for ``duration_s`` or until ``stop``."""
    stop = stop or threading.Event()
    samples = []
    if duration_s is not None:
        timer = threading.Timer(duration_s, stop.set)
        timer.start()
    try:
        report = monitor(provider, cores, interval_ms, stop, samples.append)
    finally:
        if duration_s is not None:
            timer.cancel()
    write_freqs(path, samples)
    return samples, report
