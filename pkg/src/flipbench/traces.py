"""On-disk trace formats and the single-writer that serialises them.

durations CSV  node,core,call_index,scheme,mask_bits,seed,matrix_order,kernel,start_ns,duration_ns
freq CSV       timestamp_ns,core,frequency_khz
metadata       one ``key=value`` per line
"""

import csv
import logging
import queue
import threading
from dataclasses import astuple, dataclass, fields
from pathlib import Path

from flipbench.errors import TraceFormatError

log = logging.getLogger(__name__)

DURATIONS_FILE = "durations.csv"
FREQ_FILE = "freq.csv"
METADATA_FILE = "metadata.txt"


@dataclass(frozen=True)
class DurationSample:
    node: str
    core: int
    call_index: int
    scheme: str
    mask_bits: int | None
    seed: int
    matrix_order: int
    kernel: str
    start_ns: int
    duration_ns: int

    @property
    def scheme_kind(self):
        return self.scheme.partition(":")[0]


@dataclass(frozen=True)
class FreqSample:
    timestamp_ns: int
    core: int
    frequency_khz: int


DURATION_HEADER = [f.name for f in fields(DurationSample)]
FREQ_HEADER = [f.name for f in fields(FreqSample)]


def _cell(v):
    return "" if v is None else str(v)


def duration_row(s):
    return [_cell(v) for v in astuple(s)]


def freq_row(s):
    return [str(v) for v in astuple(s)]


def _int(text, path, line, name, optional=False):
    if optional and text == "":
        return None
    try:
        return int(text)
    except ValueError:
        raise TraceFormatError(path, line, f"{name}: not an integer: {text!r}") from None


def _read_csv(path, header):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            first = next(reader)
        except StopIteration:
            raise TraceFormatError(path, 1, "missing header") from None
        if first != header:
            raise TraceFormatError(path, 1, f"bad header {first!r}, expected {header!r}")
        for row in reader:
            if len(row) != len(header):
                raise TraceFormatError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def read_durations(path):
    out = []
    for line, row in _read_csv(path, DURATION_HEADER):
        node, core, idx, scheme, mask, seed, order, kernel, start, dur = row
        s = DurationSample(
            node=node,
            core=_int(core, path, line, "core"),
            call_index=_int(idx, path, line, "call_index"),
            scheme=scheme,
            mask_bits=_int(mask, path, line, "mask_bits", optional=True),
            seed=_int(seed, path, line, "seed"),
            matrix_order=_int(order, path, line, "matrix_order"),
            kernel=kernel,
            start_ns=_int(start, path, line, "start_ns"),
            duration_ns=_int(dur, path, line, "duration_ns"),
        )
        if s.duration_ns <= 0:
            raise TraceFormatError(path, line, f"duration_ns must be positive, got {s.duration_ns}")
        if not scheme:
            raise TraceFormatError(path, line, "empty scheme")
        out.append(s)
    return out


def read_freqs(path):
    out = []
    for line, row in _read_csv(path, FREQ_HEADER):
        ts, core, khz = (_int(v, path, line, n) for v, n in zip(row, FREQ_HEADER))
        if khz <= 0:
            raise TraceFormatError(path, line, f"frequency_khz must be positive, got {khz}")
        out.append(FreqSample(ts, core, khz))
    return out


def write_durations(path, samples):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DURATION_HEADER)
        w.writerows(duration_row(s) for s in samples)


def write_freqs(path, samples):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(FREQ_HEADER)
        w.writerows(freq_row(s) for s in samples)


def write_metadata(path, items):
    with open(path, "w") as f:
        for k, v in items.items():
            v = str(v)
            if "\n" in v or "=" in k:
                raise ValueError(f"metadata entry {k!r} cannot be written on one line")
            f.write(f"{k}={v}\n")


def read_metadata(path):
    out = {}
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            k, sep, v = line.partition("=")
            if not sep:
                raise TraceFormatError(path, n, "expected key=value")
            out[k] = v
    return out


@dataclass(frozen=True)
class RunArtifacts:
    durations_path: Path
    freq_path: Path
    metadata_path: Path
    run_id: str

    @classmethod
    def in_dir(cls, directory, run_id=""):
        d = Path(directory)
        return cls(d / DURATIONS_FILE, d / FREQ_FILE, d / METADATA_FILE, run_id)

    @classmethod
    def load(cls, directory):
        art = cls.in_dir(directory)
        meta = read_metadata(art.metadata_path)
        return cls(art.durations_path, art.freq_path, art.metadata_path, meta.get("run_id", ""))


_STOP = object()


class TraceWriter:
    """Serialises duration and frequency records from many producers.

    Producers call :meth:`put_duration` / :meth:`put_freq`, which never
    block: when the bounded queue is full the record is dropped and counted
    in :attr:`overflows`.
    """

    def __init__(self, durations_path, freq_path, maxsize=65536):
        self._queue = queue.Queue(maxsize=maxsize)
        self._files = [open(durations_path, "w", newline=""), open(freq_path, "w", newline="")]
        self._writers = [csv.writer(f, lineterminator="\n") for f in self._files]
        self._writers[0].writerow(DURATION_HEADER)
        self._writers[1].writerow(FREQ_HEADER)
        self.overflows = 0
        self.written = [0, 0]
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._drain, name="trace-writer", daemon=True)
        self._thread.start()

    def _put(self, item):
        try:
            self._queue.put_nowait(item)
        except queue.Full:
            with self._lock:
                self.overflows += 1
            log.error("trace queue full; record dropped")

    def put_duration(self, sample):
        self._put((0, duration_row(sample)))

    def put_freq(self, sample):
        self._put((1, freq_row(sample)))

    def _drain(self):
        while True:
            item = self._queue.get()
            if item is _STOP:
                return
            which, row = item
            self._writers[which].writerow(row)
            self.written[which] += 1

    def close(self):
        self._queue.put(_STOP)
        self._thread.join()
        for f in self._files:
            f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
