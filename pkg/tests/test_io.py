import numpy as np
import pytest

from doqkd.errors import ConfigError
from doqkd.io import read_csv, read_ttag, truth_path, write_csv, write_ttag
from doqkd.timetags import Channel, TagStream


def truth_stream(n=500, seed=0):
    rng = np.random.default_rng(seed)
    times = np.sort(rng.integers(0, 10**9, n))
    pair_ids = rng.integers(0, 10**6, n)
    pair_ids[::7] = -1  # dark counts carry no truth
    det = rng.normal(0, 1e11, n)
    det[pair_ids == -1] = np.nan
    emit = times - rng.integers(0, 100, n)
    emit[pair_ids == -1] = 0
    return TagStream(times, Channel.F2, 10**9, pair_ids=pair_ids,
                     detunings=det, emit_times=emit)


def test_ttag_roundtrip_plain(tmp_path):
    s = TagStream(np.array([5, 10, 10, 99]), Channel.T1, 1000)
    p = tmp_path / "x.ttag"
    write_ttag(p, s)
    assert p.stat().st_size == 4 * 10  # 10-byte records
    back = read_ttag(p, duration_ps=1000)
    assert back.channel == Channel.T1
    np.testing.assert_array_equal(back.times, s.times)
    assert not back.has_truth()


def test_ttag_roundtrip_truth(tmp_path):
    s = truth_stream()
    p = tmp_path / "x.ttag"
    write_ttag(p, s)
    assert truth_path(p).stat().st_size == len(s) * 24
    back = read_ttag(p, duration_ps=s.duration_ps)
    np.testing.assert_array_equal(back.pair_ids, s.pair_ids)
    np.testing.assert_array_equal(back.emit_times[back.pair_ids >= 0],
                                  s.emit_times[s.pair_ids >= 0])
    ok = back.pair_ids >= 0
    np.testing.assert_allclose(back.detunings[ok], s.detunings[ok])


def test_ttag_mixed_channels(tmp_path):
    from doqkd.timetags import merge_sorted
    a = TagStream(np.array([1, 5]), Channel.T1, 100)
    b = TagStream(np.array([3]), Channel.F1, 100)
    merged = merge_sorted([a, b])
    p = tmp_path / "m.ttag"
    write_ttag(p, merged)
    back = read_ttag(p, 100)
    assert back.channel is None
    assert back.channels.tolist() == [0, 1, 0]


def test_ttag_truncated_rejected(tmp_path):
    p = tmp_path / "bad.ttag"
    p.write_bytes(b"\x00" * 15)
    with pytest.raises(ConfigError):
        read_ttag(p)


def test_ttag_side_count_mismatch(tmp_path):
    s = truth_stream(100)
    p = tmp_path / "x.ttag"
    write_ttag(p, s)
    truth_path(p).write_bytes(truth_path(p).read_bytes()[:-24])
    with pytest.raises(ConfigError):
        read_ttag(p)


def test_csv_roundtrip(tmp_path):
    s = TagStream(np.array([7, 8, 2000]), Channel.F1, 3000)
    p = tmp_path / "x.csv"
    write_csv(p, s)
    back = read_csv(p, duration_ps=3000)
    assert back.channel == Channel.F1
    np.testing.assert_array_equal(back.times, s.times)


def test_csv_accepts_codes_and_names(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("channel,timestamp_ps\nT1,5\n2,9\nf2,11\n")
    back = read_csv(p)
    assert back.channels.tolist() == [0, 2, 3]
    assert back.times.tolist() == [5, 9, 11]


def test_csv_bad_line(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("T9,notanumber\n")
    with pytest.raises(ConfigError):
        read_csv(p)
