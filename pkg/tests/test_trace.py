"""Trace aggregation primitives: dedup, windowing, despiking, resampling, I/O."""
import numpy as np
import pytest

from bugsweep.errors import InputMismatchError
from bugsweep.trace import (
    AudioEvent,
    DeviceTrace,
    GroundTruthTrace,
    PacketRecord,
    TimeSeries,
    UserPath,
    deduplicate,
    group_by_mac,
    normalize_mac,
    read_ground_truth,
    read_packets,
    read_userpath,
    resample_ground_truth,
    suppress_iframes,
    windowize,
    write_ground_truth,
    write_packets,
    write_userpath,
)

from oracles import dedup_bruteforce

MAC = "aa:bb:cc:00:00:01"


def pkt(t, seq=None, payload=100, mac=MAC, channel=6):
    return PacketRecord(t, mac, seq, payload, channel)


class TestMac:
    def test_normalizes_case_and_dashes(self):
        assert normalize_mac("AA-BB-CC-00-00-01") == MAC

    def test_rejects_garbage(self):
        for bad in ("aa:bb:cc:00:00", "zz:bb:cc:00:00:01", "aabbcc000001", ""):
            with pytest.raises(ValueError):
                normalize_mac(bad)


class TestDeduplicate:
    def test_retransmission_within_horizon_dropped(self):
        tr = DeviceTrace(MAC, [pkt(0, seq=9, payload=500), pkt(2_000, seq=9, payload=500)])
        out = deduplicate(tr)
        assert len(out) == 1 and out.records[0].timestamp_us == 0

    def test_same_seq_different_payload_kept(self):
        tr = DeviceTrace(MAC, [pkt(0, seq=9, payload=500), pkt(2_000, seq=9, payload=400)])
        assert len(deduplicate(tr)) == 2

    def test_outside_horizon_kept(self):
        tr = DeviceTrace(MAC, [pkt(0, seq=9, payload=500), pkt(60_000, seq=9, payload=500)])
        assert len(deduplicate(tr)) == 2

    def test_records_without_seq_never_dropped(self):
        tr = DeviceTrace(MAC, [pkt(0, payload=500), pkt(1, payload=500), pkt(2, payload=500)])
        assert len(deduplicate(tr)) == 3

    def test_matches_pairwise_oracle_with_random_duplicates(self):
        rng = np.random.default_rng(42)
        originals = []
        t = 0
        for i in range(1000):
            t += int(rng.integers(1_000, 200_000))
            originals.append(pkt(t, seq=i % 4096, payload=int(rng.integers(100, 1500))))
        # duplicate a random 10% at offsets < 50 ms
        dup_idx = rng.choice(len(originals), size=100, replace=False)
        dups = [
            PacketRecord(
                originals[i].timestamp_us + int(rng.integers(1, 49_999)),
                MAC,
                originals[i].seq,
                originals[i].payload,
                6,
            )
            for i in dup_idx
        ]
        tr = DeviceTrace(MAC, originals + dups)
        out = deduplicate(tr)
        oracle = dedup_bruteforce(tr.records, 50_000)
        assert out.records == oracle
        assert len(out) == 1000

    def test_idempotent_on_random_traces(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            recs = [
                pkt(
                    int(rng.integers(0, 3_000_000)),
                    seq=int(rng.integers(0, 30)),
                    payload=int(rng.integers(1, 4)) * 100,
                )
                for _ in range(120)
            ]
            once = deduplicate(DeviceTrace(MAC, recs))
            twice = deduplicate(once)
            assert once.records == twice.records

    def test_no_retained_pair_shares_key_within_horizon(self):
        rng = np.random.default_rng(13)
        recs = [
            pkt(int(rng.integers(0, 1_000_000)), seq=int(rng.integers(0, 5)), payload=100)
            for _ in range(200)
        ]
        out = deduplicate(DeviceTrace(MAC, recs))
        for i, a in enumerate(out.records):
            for b in out.records[i + 1 :]:
                if a.seq == b.seq and a.payload == b.payload:
                    assert b.timestamp_us - a.timestamp_us > 50_000


class TestWindowize:
    def test_basic_two_windows(self):
        tr = DeviceTrace(MAC, [pkt(10_000, payload=500), pkt(120_000, payload=300)])
        series = windowize(tr, 100_000)
        assert series.values.tolist() == [500.0, 300.0]

    def test_empty_trace_explicit_span(self):
        series = windowize(DeviceTrace(MAC, []), 100_000, span_us=1_000_000)
        assert series.values.tolist() == [0.0] * 10

    def test_byte_conservation_random(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            recs = [
                pkt(int(rng.integers(0, 10_000_000)), seq=int(rng.integers(0, 4096)),
                    payload=int(rng.integers(1, 1500)))
                for _ in range(500)
            ]
            tr = deduplicate(DeviceTrace(MAC, recs))
            series = windowize(tr)
            assert series.values.sum() == tr.total_bytes()

    def test_boundary_belongs_to_next_window(self):
        tr = DeviceTrace(MAC, [pkt(100_000, payload=10)])
        series = windowize(tr, 100_000)
        assert series.values.tolist() == [0.0, 10.0]


class TestSuppressIframes:
    def test_flat_series_unchanged(self):
        series = TimeSeries(0, 100_000, np.full(30, 100.0))
        out = suppress_iframes(series)
        assert np.array_equal(out.values, series.values)

    def test_single_spike_replaced_by_trailing_mean(self):
        v = np.full(30, 100.0)
        v[10] = 1000.0
        out = suppress_iframes(TimeSeries(0, 100_000, v))
        assert out.values[10] == 100.0
        assert np.array_equal(np.delete(out.values, 10), np.delete(v, 10))

    def test_periodic_spikes_flattened(self):
        v = np.full(60, 100.0)
        v[10::10] = 900.0  # keyframe every 10 windows
        out = suppress_iframes(TimeSeries(0, 100_000, v))
        assert out.values.max() / np.median(out.values) < 2.5

    def test_never_raises_a_window(self):
        rng = np.random.default_rng(11)
        v = rng.uniform(10, 1000, size=80)
        out = suppress_iframes(TimeSeries(0, 100_000, v))
        assert np.all(out.values <= v + 1e-12)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            suppress_iframes(TimeSeries(0, 100_000, np.ones(19)))


class TestResample:
    def test_window_means_of_50hz_ramp(self):
        # 50 samples over 1 s valued 1..50 -> window means 3, 8, ..., 48
        times = np.arange(50, dtype=np.int64) * 20_000
        vals = np.arange(1.0, 51.0)
        gt = GroundTruthTrace("imu", times, np.column_stack([vals, vals, vals]))
        series, interp = resample_ground_truth(gt, 100_000)
        expected = np.arange(3.0, 49.0, 5.0)
        for axis in series:
            assert np.allclose(axis.values, expected)
        assert not interp.any()

    def test_empty_window_carries_forward(self):
        times = np.array([0, 20_000, 250_000], dtype=np.int64)
        accel = np.array([[1.0, 0, 0], [3.0, 0, 0], [7.0, 0, 0]])
        gt = GroundTruthTrace("imu", times, accel)
        series, interp = resample_ground_truth(gt, 100_000, span_us=300_000)
        assert series[0].values.tolist() == [2.0, 2.0, 7.0]
        assert interp.tolist() == [False, True, False]

    def test_aligns_with_windowize(self):
        times = np.arange(100, dtype=np.int64) * 20_000
        gt = GroundTruthTrace("imu", times, np.zeros((100, 3)))
        series, _ = resample_ground_truth(gt, 100_000, span_us=2_000_000)
        tr = DeviceTrace(MAC, [pkt(1_999_999, payload=5)])
        traffic = windowize(tr, 100_000, span_us=2_000_000)
        assert len(series[0]) == len(traffic) == 20
        assert series[0].start_us == traffic.start_us


class TestFileRoundTrips:
    def test_packet_trace_bit_exact(self, tmp_path):
        rng = np.random.default_rng(23)
        recs = [
            pkt(
                int(rng.integers(0, 5_000_000)),
                seq=None if rng.random() < 0.2 else int(rng.integers(0, 4096)),
                payload=int(rng.integers(0, 1500)),
            )
            for _ in range(300)
        ]
        recs.sort(key=lambda r: r.timestamp_us)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_packets(p1, recs)
        back = read_packets(p1)
        assert back == recs
        write_packets(p2, back)
        assert p1.read_bytes() == p2.read_bytes()

    def test_ground_truth_bit_exact(self, tmp_path):
        rng = np.random.default_rng(29)
        times = np.arange(200, dtype=np.int64) * 20_000
        accel = rng.normal(size=(200, 3)) * 3.3333
        gt = GroundTruthTrace(
            "imu",
            times,
            accel,
            events=[AudioEvent("alexa", 100_000, 1_400_000), AudioEvent("alexa", 2_000_000, 3_100_000)],
        )
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_ground_truth(p1, gt)
        back = read_ground_truth(p1)
        assert back.kind == "imu"
        assert np.array_equal(back.times_us, gt.times_us)
        assert np.array_equal(back.accel, gt.accel)
        assert back.events == gt.events
        write_ground_truth(p2, back)
        assert p1.read_bytes() == p2.read_bytes()

    def test_userpath_bit_exact(self, tmp_path):
        rng = np.random.default_rng(31)
        up = UserPath(np.arange(50, dtype=np.int64) * 100_000, rng.uniform(0, 6, size=(50, 2)))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_userpath(p1, up)
        back = read_userpath(p1)
        assert np.array_equal(back.times_us, up.times_us)
        assert np.array_equal(back.xy, up.xy)
        write_userpath(p2, back)
        assert p1.read_bytes() == p2.read_bytes()

    def test_malformed_packet_line_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("123,aa:bb:cc:00:00:01,7,100\n")  # missing channel
        with pytest.raises(InputMismatchError):
            read_packets(p)

    def test_unterminated_event_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1000,alexa,start\n")
        with pytest.raises(InputMismatchError):
            read_ground_truth(p)

    def test_group_by_mac_sorted(self):
        recs = [pkt(0, mac="dd:ee:ff:00:00:01"), pkt(5, mac=MAC), pkt(9, mac=MAC)]
        grouped = group_by_mac(recs)
        assert list(grouped) == [MAC, "dd:ee:ff:00:00:01"]
        assert len(grouped[MAC]) == 2
