import os
import threading
import time

import numpy as np
import pytest

from flipbench import datagen, harness, kernels
from flipbench.datagen import parse_init_spec
from flipbench.errors import KernelError, PinError
from flipbench.flipmodel import PowerModel
from flipbench.freqmon import SimulatedProvider
from flipbench.traces import read_durations, read_freqs, read_metadata


def in_thread(fn, *args):
    out = {}

    def run():
        try:
            out["value"] = fn(*args)
        except BaseException as e:  # noqa: BLE001
            out["error"] = e

    t = threading.Thread(target=run)
    t.start()
    t.join()
    if "error" in out:
        raise out["error"]
    return out["value"]


def cfg(tmp_path, **kw):
    base = dict(cores=[0], init=parse_init_spec("constant:1"), output_dir=tmp_path, node_label="t",
                matrix_order=64, calls_per_core=10, warmup_seconds=0, monitor_interval_ms=10)
    base.update(kw)
    return harness.ExperimentConfig(**base)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        cfg(tmp_path, cores=[])
    with pytest.raises(ValueError):
        cfg(tmp_path, cores=[0, 0])
    with pytest.raises(ValueError):
        cfg(tmp_path, calls_per_core=0)
    with pytest.raises(KernelError):
        cfg(tmp_path, kernel="nope")
    assert cfg(tmp_path, matrix_order=16).block == 16


def test_warmup_zero_is_immediate():
    t0 = time.monotonic()
    assert harness.warmup(0, [0]) == {0: 0}
    assert time.monotonic() - t0 < 0.1


def test_warmup_runs_for_requested_time():
    harness.warmup(0.01, [0])  # compile outside the timed region
    t0 = time.monotonic()
    counts = harness.warmup(2, [0])
    elapsed = time.monotonic() - t0
    assert 2.0 <= elapsed <= 2.5
    assert counts[0] > 0


@pytest.mark.skipif(not hasattr(os, "sched_setaffinity"), reason="no affinity API")
def test_pinning():
    core = min(os.sched_getaffinity(0))
    assert in_thread(harness.pin_worker, core) == {core}
    with pytest.raises(PinError):
        in_thread(harness.pin_worker, 10**6)


def test_run_writes_rows(tmp_path):
    prov = SimulatedProvider(PowerModel())
    art = harness.run_calibration(cfg(tmp_path), provider=prov)
    rows = read_durations(art.durations_path)
    assert len(rows) == 10
    assert [r.call_index for r in rows] == list(range(10))
    starts = [r.start_ns for r in rows]
    assert starts == sorted(starts)
    assert all(r.scheme == "constant:1" and r.matrix_order == 64 and r.duration_ns > 0 for r in rows)
    meta = read_metadata(art.metadata_path)
    assert meta["status"] == "ok"
    assert meta["durations_rows"] == "10"
    assert meta["config.scheme"] == "constant:1"
    assert len(read_freqs(art.freq_path)) >= 1


def test_rerun_regenerates_identical_operands():
    spec = parse_init_spec("random", seed=42)
    first = datagen.generate_operands(spec, 64)
    second = datagen.generate_operands(spec, 64)
    for x, y in zip(first, second):
        assert x.bit_equal(y)


def test_kernel_failure_aborts(tmp_path):
    calls = []

    def broken(alpha, a, b, beta, c, block):
        calls.append(1)
        if len(calls) == 3:
            raise RuntimeError("boom")
        return kernels.dgemm_blocked(alpha, a, b, beta, c, block)

    kernels.register_kernel("broken-test", broken)
    try:
        with pytest.raises(KernelError, match="boom"):
            harness.run_calibration(cfg(tmp_path, kernel="broken-test"), provider=SimulatedProvider(PowerModel()))
    finally:
        kernels.KERNELS.pop("broken-test")
    meta = read_metadata(tmp_path / "metadata.txt")
    assert meta["status"] == "aborted"
    assert len(read_durations(tmp_path / "durations.csv")) == 2


def test_unknown_core_fails_before_writing(tmp_path):
    with pytest.raises(PinError):
        harness.run_calibration(cfg(tmp_path, cores=[10**6]), provider=SimulatedProvider(PowerModel()))
    assert not (tmp_path / "durations.csv").exists()


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        harness.run_calibration(cfg(tmp_path / "file" / "sub"), provider=SimulatedProvider(PowerModel()))


def test_kernel_result_is_correct_after_refresh(tmp_path):
    # the worker restores C before every call, so each call computes A@B + C0
    spec = parse_init_spec("random", seed=1)
    a, b, c0 = (m.as_2d() for m in datagen.generate_operands(spec, 32))
    c = c0.copy()
    kernels.dgemm_blocked(1.0, a, b, 1.0, c, 8)
    np.testing.assert_allclose(c, a @ b + c0, rtol=1e-12)
