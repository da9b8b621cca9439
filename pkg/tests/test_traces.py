import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from flipbench import traces
from flipbench.errors import TraceFormatError
from flipbench.traces import DurationSample, FreqSample

names = st.text(st.characters(min_codepoint=32, max_codepoint=126), min_size=1, max_size=12)
durations = st.builds(
    DurationSample,
    node=names,
    core=st.integers(0, 1023),
    call_index=st.integers(0, 10**6),
    scheme=st.sampled_from(["constant:0.987", "sequential", "random", "masked:26"]),
    mask_bits=st.one_of(st.none(), st.integers(0, 53)),
    seed=st.integers(0, 2**64 - 1),
    matrix_order=st.integers(2, 4096),
    kernel=st.sampled_from(["naive", "blocked"]),
    start_ns=st.integers(0, 2**63 - 1),
    duration_ns=st.integers(1, 2**62),
)
freqs = st.builds(FreqSample, st.integers(0, 2**63 - 1), st.integers(0, 1023), st.integers(1, 10**8))


@given(st.lists(durations, max_size=20))
def test_durations_round_trip(tmp_path_factory, rows):
    p = tmp_path_factory.mktemp("d") / "d.csv"
    traces.write_durations(p, rows)
    assert traces.read_durations(p) == rows


@given(st.lists(freqs, max_size=20))
def test_freqs_round_trip(tmp_path_factory, rows):
    p = tmp_path_factory.mktemp("f") / "f.csv"
    traces.write_freqs(p, rows)
    assert traces.read_freqs(p) == rows


def test_headers_are_fixed(tmp_path):
    traces.write_durations(tmp_path / "d.csv", [])
    traces.write_freqs(tmp_path / "f.csv", [])
    assert (tmp_path / "d.csv").read_text() == \
        "node,core,call_index,scheme,mask_bits,seed,matrix_order,kernel,start_ns,duration_ns\n"
    assert (tmp_path / "f.csv").read_text() == "timestamp_ns,core,frequency_khz\n"


@pytest.mark.parametrize("body, line", [
    ("", 1),
    ("a,b\n", 1),
    ("timestamp_ns,core,frequency_khz\n1,0,5\n2,0\n", 3),
    ("timestamp_ns,core,frequency_khz\n1,0,0\n", 2),
    ("timestamp_ns,core,frequency_khz\n1,0,1.5\n", 2),
])
def test_freq_parse_errors(tmp_path, body, line):
    p = tmp_path / "f.csv"
    p.write_text(body)
    with pytest.raises(TraceFormatError) as e:
        traces.read_freqs(p)
    assert e.value.line == line


def test_nonpositive_duration_rejected(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(",".join(traces.DURATION_HEADER) + "\nn,0,0,random,,0,64,blocked,5,0\n")
    with pytest.raises(TraceFormatError):
        traces.read_durations(p)


def test_metadata_round_trip(tmp_path):
    p = tmp_path / "m.txt"
    items = {"run_id": "x-1", "config.scheme": "constant:0.987", "empty": "", "eq": "a=b"}
    traces.write_metadata(p, items)
    assert traces.read_metadata(p) == items
    with pytest.raises(ValueError):
        traces.write_metadata(p, {"k": "two\nlines"})


def test_writer_serialises_many_producers(tmp_path):
    w = traces.TraceWriter(tmp_path / "d.csv", tmp_path / "f.csv")

    def produce(core):
        for i in range(500):
            w.put_duration(DurationSample("n", core, i, "random", None, 0, 8, "naive", i, 1))
            w.put_freq(FreqSample(i, core, 1000))

    threads = [threading.Thread(target=produce, args=(c,)) for c in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    w.close()
    assert w.overflows == 0
    rows = traces.read_durations(tmp_path / "d.csv")
    assert len(rows) == 2000
    for c in range(4):
        assert [r.call_index for r in rows if r.core == c] == list(range(500))
    assert len(traces.read_freqs(tmp_path / "f.csv")) == 2000


def test_writer_overflow_is_counted_not_blocking(tmp_path):
    w = traces.TraceWriter(tmp_path / "d.csv", tmp_path / "f.csv", maxsize=1)
    gate = threading.Event()
    # stall the drain thread on its first write
    real = w._writers[1]

    class Stalled:
        def writerow(self, row):
            gate.wait()
            real.writerow(row)

    w._writers[1] = Stalled()
    for i in range(50):
        w.put_freq(FreqSample(i, 0, 1))
    gate.set()
    w.close()
    assert w.overflows > 0
    assert w.written[1] + w.overflows == 50
