"""Storage engine: WAL durability, segment integrity, queries, retention."""

import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netgraf.model import canonical_series_key
from netgraf.store import (
    Aggregator,
    CorruptSegment,
    InvalidRange,
    InvalidSelector,
    OutOfOrderAppend,
    RetentionPolicy,
    RetentionRule,
    SeriesStore,
    StoreError,
    downsample,
    parse_selector,
    rate,
)
from netgraf.store import segments as seg_mod
from netgraf.store import wal as wal_mod
from netgraf.store.crc32c import crc32c

from oracles import bucket_downsample, bucket_query

AGGS = {
    Aggregator.AVG: "avg",
    Aggregator.MIN: "min",
    Aggregator.MAX: "max",
    Aggregator.LAST: "last",
    Aggregator.SUM: "sum",
    Aggregator.RATE: "rate",
}


def key_for(metric="m", node="n1", tool="t", **extra):
    labels = {"node": node, "tool": tool, **extra}
    return canonical_series_key(metric, labels.items())


def frames_as_dict(frames):
    return {f.series.text(): f.points for f in frames}


def assert_rows_equal(got, want):
    assert len(got) == len(want)
    for (gt, gv), (wt, wv) in zip(got, want):
        assert gt == wt
        if wv is None:
            assert gv is None
        else:
            assert gv == pytest.approx(wv, rel=1e-9, abs=1e-12)


# -- checksum ---------------------------------------------------------------


def test_crc32c_check_values():
    assert crc32c(b"") == 0
    assert crc32c(b"a") == 0xC1D04330
    assert crc32c(b"123456789") == 0xE3069283


@given(st.binary(max_size=64), st.binary(max_size=64))
def test_crc32c_chains_incrementally(a, b):
    assert crc32c(a + b) == crc32c(b, crc32c(a))


# -- write-ahead log --------------------------------------------------------


def test_wal_round_trip(tmp_path):
    path = tmp_path / "wal.log"
    log = wal_mod.WriteAheadLog(path)
    records = [("m{node=a,tool=t}", 1000, 1.5), ("m{node=b,tool=t}", 2000, -0.25)]
    for rec in records:
        log.append(*rec)
    log.close()
    assert list(wal_mod.replay(path)) == records


def test_wal_torn_tail_truncated(tmp_path):
    path = tmp_path / "wal.log"
    log = wal_mod.WriteAheadLog(path)
    log.append("m{node=a,tool=t}", 1000, 1.0)
    log.append("m{node=a,tool=t}", 2000, 2.0)
    log.close()
    whole = path.stat().st_size
    torn = wal_mod.encode_record("m{node=a,tool=t}", 3000, 3.0)[:10]
    with open(path, "ab") as fh:
        fh.write(torn)
    assert [ts for _, ts, _ in wal_mod.replay(path)] == [1000, 2000]
    assert path.stat().st_size == whole


def test_wal_bad_crc_stops_replay(tmp_path):
    path = tmp_path / "wal.log"
    log = wal_mod.WriteAheadLog(path)
    for ts in (1000, 2000, 3000):
        log.append("m{node=a,tool=t}", ts, float(ts))
    log.close()
    one = len(wal_mod.encode_record("m{node=a,tool=t}", 1000, 1000.0))
    data = bytearray(path.read_bytes())
    data[one + 8] ^= 0xFF  # inside the second record's payload
    path.write_bytes(bytes(data))
    assert [ts for _, ts, _ in wal_mod.replay(path)] == [1000]
    assert path.stat().st_size == one


@given(st.integers(min_value=1, max_value=2**62), st.floats(allow_nan=False, allow_infinity=False))
def test_wal_record_encoding_round_trips(ts, value):
    record = wal_mod.encode_record("x{node=a,tool=b}", ts, value)
    (length,) = struct.unpack_from("<I", record, 0)
    key, got_ts, got_value = wal_mod.decode_payload(record[4 : 4 + length])
    assert (key, got_ts) == ("x{node=a,tool=b}", ts)
    assert got_value == value or (value != value and got_value != got_value)


# -- segments ---------------------------------------------------------------


def test_segment_round_trip(tmp_path):
    writer = seg_mod.SegmentWriter(tmp_path)
    chunks = [
        ("a{node=x,tool=t}", [(1000, 1.0), (2000, 2.0)]),
        ("b{node=y,tool=t}", [(5000, -1.0)]),
    ]
    for key, points in chunks:
        writer.write_chunk(key, points)
    writer.close()
    files = sorted(tmp_path.glob("*.seg"))
    assert len(files) == 1
    assert list(seg_mod.read_segment(files[0])) == chunks


def test_segment_corruption_detected_after_valid_prefix(tmp_path):
    writer = seg_mod.SegmentWriter(tmp_path)
    writer.write_chunk("a{node=x,tool=t}", [(1000, 1.0)])
    writer.write_chunk("b{node=y,tool=t}", [(2000, 2.0)])
    writer.close()
    path = sorted(tmp_path.glob("*.seg"))[0]
    data = bytearray(path.read_bytes())
    data[-1] ^= 0xFF  # breaks the second chunk's checksum
    path.write_bytes(bytes(data))

    seen = []
    with pytest.raises(CorruptSegment):
        for chunk in seg_mod.read_segment(path):
            seen.append(chunk)
    assert seen == [("a{node=x,tool=t}", [(1000, 1.0)])]


def test_segment_bad_magic(tmp_path):
    path = tmp_path / "00000.seg"
    path.write_bytes(b"nope" + b"\x00" * 16)
    with pytest.raises(CorruptSegment):
        list(seg_mod.read_segment(path))


def test_segment_writer_rolls_files(tmp_path):
    writer = seg_mod.SegmentWriter(tmp_path, chunks_per_file=2)
    for i in range(5):
        writer.write_chunk("a{node=x,tool=t}", [(1000 * (i + 1), float(i))])
    writer.close()
    assert [p.name for p in sorted(tmp_path.glob("*.seg"))] == [
        "00000.seg",
        "00001.seg",
        "00002.seg",
    ]


# -- chunk lifecycle --------------------------------------------------------


def test_chunk_seals_at_capacity(tmp_path):
    store = SeriesStore.open(tmp_path)
    key = key_for()
    for i in range(1025):
        store.append(key, (i + 1) * 1000, float(i))
    series = store._series[key.text()]
    assert len(series.sealed) == 1
    assert len(series.sealed[0].points) == 1024
    assert series.sealed[0].sealed
    assert len(series.open_points) == 1
    store.close()


def test_append_rejects_out_of_order_and_leaves_store_unchanged(tmp_path):
    store = SeriesStore.open(tmp_path)
    key = key_for()
    store.append(key, 1000, 1.0)
    store.append(key, 2000, 2.0)
    before = frames_as_dict(store.query_range("m", 1, 3001, 1000, Aggregator.LAST))
    with pytest.raises(OutOfOrderAppend):
        store.append(key, 1500, 9.0)
    with pytest.raises(OutOfOrderAppend):
        store.append(key, 2000, 9.0)  # equal timestamp is also too old
    after = frames_as_dict(store.query_range("m", 1, 3001, 1000, Aggregator.LAST))
    assert before == after
    store.close()

    # the rejected appends must not be durable either
    reopened = SeriesStore.open(tmp_path)
    again = frames_as_dict(reopened.query_range("m", 1, 3001, 1000, Aggregator.LAST))
    assert again == before
    reopened.close()


def test_appends_to_different_series_are_independent(tmp_path):
    store = SeriesStore.open(tmp_path)
    a, b = key_for(node="a"), key_for(node="b")
    store.append(a, 5000, 1.0)
    store.append(b, 1000, 2.0)  # older than a's tail, different series
    assert store.series_tails() == {a.text(): 5000, b.text(): 1000}
    store.close()


# -- rate and downsample ----------------------------------------------------


def test_rate_worked_examples():
    assert rate([(0, 100.0), (10000, 200.0)]) == [(10000, 10.0)]
    assert rate([(0, 100.0), (10000, 50.0)]) == [(10000, 5.0)]
    assert rate([(0, 100.0)]) == []
    assert rate([]) == []


@given(
    st.lists(
        st.tuples(
            st.integers(min_value=1, max_value=10**7),
            st.floats(min_value=0, max_value=10**9, allow_nan=False),
        ),
        max_size=40,
        unique_by=lambda p: p[0],
    ).map(sorted)
)
def test_rate_matches_oracle_and_is_nonnegative(points):
    from oracles import rate_of

    got = rate(points)
    want = rate_of(points)
    assert len(got) == len(want)
    for (gt, gv), (wt, wv) in zip(got, want):
        assert gt == wt
        assert gv == pytest.approx(wv, rel=1e-9, abs=1e-12)
        assert gv >= 0


def test_downsample_worked_example():
    points = [(0, 1.0), (1000, 2.0), (2000, 3.0), (3000, 4.0)]
    assert downsample(points, 2000, Aggregator.AVG) == [(0, 1.5), (2000, 3.5)]


@given(
    st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=10**6),
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
        ),
        max_size=60,
        unique_by=lambda p: p[0],
    ).map(sorted),
    st.sampled_from([1000, 2000, 5000, 60000]),
    st.sampled_from([Aggregator.AVG, Aggregator.MIN, Aggregator.MAX, Aggregator.LAST, Aggregator.SUM]),
)
def test_downsample_matches_oracle(points, resolution, agg):
    got = downsample(points, resolution, agg)
    want = bucket_downsample(points, resolution, AGGS[agg])
    assert [ts for ts, _ in got] == [ts for ts, _ in want]
    for (_, gv), (_, wv) in zip(got, want):
        assert gv == pytest.approx(wv, rel=1e-9, abs=1e-12)
    # empty buckets omitted; timestamps are bucket starts
    assert all(ts % resolution == 0 for ts, _ in got)


# -- queries ----------------------------------------------------------------


def test_query_worked_example(tmp_path):
    store = SeriesStore.open(tmp_path)
    key = key_for()
    for ts, v in [(500, 1.0), (1000, 2.0), (2000, 3.0), (3000, 4.0)]:
        store.append(key, ts, v)
    frames = store.query_range("m", 0, 4000, 2000, Aggregator.AVG)
    assert len(frames) == 1
    assert frames[0].points == [(0, 1.5), (2000, 3.5)]
    store.close()


def test_query_null_buckets_never_interpolated(tmp_path):
    store = SeriesStore.open(tmp_path)
    key = key_for()
    store.append(key, 1500, 10.0)
    store.append(key, 7500, 20.0)
    frames = store.query_range("m", 1000, 9000, 2000, Aggregator.AVG)
    assert frames[0].points == [(1000, 10.0), (3000, None), (5000, None), (7000, 20.0)]
    store.close()


def test_query_validates_range_and_step(tmp_path):
    store = SeriesStore.open(tmp_path)
    with pytest.raises(InvalidRange):
        store.query_range("m", 5000, 5000, 1000, Aggregator.AVG)
    with pytest.raises(InvalidRange):
        store.query_range("m", 6000, 5000, 1000, Aggregator.AVG)
    with pytest.raises(InvalidRange):
        store.query_range("m", 0, 5000, 999, Aggregator.AVG)
    store.close()


def test_query_rejects_bad_selector(tmp_path):
    store = SeriesStore.open(tmp_path)
    with pytest.raises(InvalidSelector):
        store.query_range("", 0, 1000, 1000, Aggregator.AVG)
    with pytest.raises(InvalidSelector):
        store.query_range("m{unclosed", 0, 1000, 1000, Aggregator.AVG)
    store.close()


def test_frames_sorted_by_canonical_key(tmp_path):
    store = SeriesStore.open(tmp_path)
    for node in ["zeta", "alpha", "mid"]:
        store.append(key_for(node=node), 1000, 1.0)
    frames = store.query_range("m", 0, 2000, 1000, Aggregator.LAST)
    texts = [f.series.text() for f in frames]
    assert texts == sorted(texts)
    assert len(frames) == 3
    store.close()


def test_selector_matching(tmp_path):
    store = SeriesStore.open(tmp_path)
    store.append(key_for(metric="throughput_bytes_per_second", node="n1", tool="netdata"), 1000, 1.0)
    store.append(key_for(metric="throughput_bytes_per_second", node="n2", tool="ntopng"), 1000, 2.0)
    store.append(key_for(metric="packet_loss_ratio", node="n1", tool="perfsonar"), 1000, 0.01)

    assert len(store.list_series("*")) == 3
    assert len(store.list_series("throughput_bytes_per_second")) == 2
    assert len(store.list_series("throughput_*")) == 2
    assert len(store.list_series("*_ratio")) == 1
    assert len(store.list_series('throughput_bytes_per_second{node=n1}')) == 1
    assert len(store.list_series("{node=n1}")) == 2
    assert len(store.list_series("{node=n1,tool=netdata}")) == 1
    assert store.list_series("{node=nowhere}") == []
    keys = store.list_series("*")
    assert [k.text() for k in keys] == sorted(k.text() for k in keys)
    store.close()


def test_selector_parse_errors():
    for bad in ["", "  ", "m{", "m{a}", "{}", "m{=v}", "has space", "bad-name"]:
        with pytest.raises(InvalidSelector):
            parse_selector(bad)


def test_randomized_queries_match_oracle(tmp_path):
    rng = random.Random(0xC0FFEE)
    for case in range(25):
        data_dir = tmp_path / f"case{case}"
        store = SeriesStore.open(data_dir, chunk_capacity=32)
        n_series = rng.randint(1, 4)
        keys = [key_for(node=f"n{i}") for i in range(n_series)]
        samples = []
        for key in keys:
            ts = rng.randint(1, 5000)
            for _ in range(rng.randint(0, 120)):
                value = rng.uniform(0, 1000)
                store.append(key, ts, value)
                samples.append((key.text(), ts, value))
                ts += rng.randint(200, 4000)
        t0 = rng.randint(0, 20000)
        t1 = t0 + rng.randint(1000, 300000)
        step = rng.choice([1000, 2000, 7000, 15000])
        for agg, name in AGGS.items():
            got = frames_as_dict(store.query_range("m", t0, t1, step, agg))
            want = bucket_query(samples, t0, t1, step, name)
            assert set(got) == set(want)
            for text in want:
                assert_rows_equal(got[text], want[text])
        store.close()


# -- recovery and durability ------------------------------------------------


def test_recovery_after_crash_preserves_acked_appends(tmp_path):
    rng = random.Random(42)
    for run in range(6):
        data_dir = tmp_path / f"run{run}"
        store = SeriesStore.open(data_dir, chunk_capacity=16)
        keys = [key_for(node=f"n{i}") for i in range(3)]
        acked = []
        tails = {k.text(): 0 for k in keys}
        for _ in range(rng.randint(1, 400)):
            key = rng.choice(keys)
            ts = tails[key.text()] + rng.randint(1000, 5000)
            value = rng.uniform(-100, 100)
            store.append(key, ts, value)
            acked.append((key.text(), ts, value))
            tails[key.text()] = ts
        store.crash()

        recovered = SeriesStore.open(data_dir)
        horizon = max(ts for _, ts, _ in acked) + 1000
        got = frames_as_dict(
            recovered.query_range("m", 1, horizon, 1000, Aggregator.LAST)
        )
        for key_text, ts, value in acked:
            bucket = ((ts - 1) // 1000) * 1000 + 1
            row = dict(got[key_text])
            assert row[bucket] == pytest.approx(value)
        total_points = sum(
            1 for pts in got.values() for _, v in pts if v is not None
        )
        assert total_points == len(set((k, t) for k, t, _ in acked))
        recovered.close()


def test_index_rebuilt_on_open_matches_previous_state(tmp_path):
    store = SeriesStore.open(tmp_path, chunk_capacity=8)
    for i in range(5):
        key = key_for(metric="throughput_bytes_per_second", node=f"n{i}", tool="netdata")
        for j in range(20):
            store.append(key, (j + 1) * 1000, float(i * 100 + j))
    before = [k.text() for k in store.list_series("*")]
    by_label_before = [k.text() for k in store.list_series("{node=n3}")]
    store.close()

    reopened = SeriesStore.open(tmp_path)
    assert [k.text() for k in reopened.list_series("*")] == before
    assert [k.text() for k in reopened.list_series("{node=n3}")] == by_label_before
    reopened.close()


def test_clean_close_checkpoints_wal(tmp_path):
    store = SeriesStore.open(tmp_path, chunk_capacity=64)
    key = key_for()
    for i in range(200):
        store.append(key, (i + 1) * 1000, float(i))
    size_before = (tmp_path / "wal.log").stat().st_size
    store.close()
    size_after = (tmp_path / "wal.log").stat().st_size
    # 192 points sealed into 3 chunks; only the 8 open points remain logged
    assert size_after < size_before
    assert size_after == 8 * len(wal_mod.encode_record(key.text(), 1000, 0.0))

    reopened = SeriesStore.open(tmp_path)
    frames = reopened.query_range("m", 1, 200001, 200000, Aggregator.SUM)
    assert frames[0].points[0][1] == pytest.approx(sum(range(200)))
    reopened.close()


def test_torn_wal_tail_recovers_prefix(tmp_path):
    store = SeriesStore.open(tmp_path)
    key = key_for()
    for ts in (1000, 2000, 3000):
        store.append(key, ts, float(ts))
    store.crash()
    wal_path = tmp_path / "wal.log"
    data = wal_path.read_bytes()
    wal_path.write_bytes(data[:-5])  # tear the last record

    recovered = SeriesStore.open(tmp_path)
    frames = recovered.query_range("m", 1, 4001, 1000, Aggregator.LAST)
    values = [v for _, v in frames[0].points if v is not None]
    assert values == [1000.0, 2000.0]
    recovered.close()


def test_corrupt_segment_quarantined_valid_chunks_survive(tmp_path):
    store = SeriesStore.open(tmp_path, chunk_capacity=4)
    a = key_for(node="a")
    b = key_for(node="b")
    for i in range(4):
        store.append(a, (i + 1) * 1000, float(i))
    for i in range(4):
        store.append(b, (i + 1) * 1000, float(10 + i))
    store.close()

    path = sorted((tmp_path / "segments").glob("*.seg"))[0]
    data = bytearray(path.read_bytes())
    data[-1] ^= 0xFF  # destroys the checksum of the second chunk (series b)
    path.write_bytes(bytes(data))

    recovered = SeriesStore.open(tmp_path)
    assert len(recovered.corrupt_segments) == 1
    assert list((tmp_path / "segments").glob("*.quarantined"))
    got = frames_as_dict(recovered.query_range("m", 1, 5000, 5000, Aggregator.SUM))
    assert got[a.text()][0][1] == pytest.approx(0 + 1 + 2 + 3)
    # series b's only copy was the corrupt chunk
    assert got.get(b.text(), [(1, None)])[0][1] is None
    recovered.close()

    # the surviving chunk was re-persisted: a second open sees no corruption
    again = SeriesStore.open(tmp_path)
    assert again.corrupt_segments == []
    got = frames_as_dict(again.query_range("m", 1, 5000, 5000, Aggregator.SUM))
    assert got[a.text()][0][1] == pytest.approx(6)
    again.close()


def test_second_opener_is_locked_out(tmp_path):
    first = SeriesStore.open(tmp_path)
    with pytest.raises(StoreError, match="locked"):
        SeriesStore.open(tmp_path)
    first.close()
    second = SeriesStore.open(tmp_path)
    second.close()


# -- retention and rollups --------------------------------------------------


def make_policy():
    return RetentionPolicy(
        raw_ttl_ms=20_000,
        downsample_rules=(
            RetentionRule(10_000, Aggregator.AVG, 600_000),
            RetentionRule(30_000, Aggregator.AVG, 3_600_000),
        ),
    )


def test_retention_purges_only_expired_raw(tmp_path):
    store = SeriesStore.open(tmp_path, chunk_capacity=8)
    key = key_for()
    for i in range(64):
        store.append(key, (i + 1) * 1000, float(i))
    now = 64_000
    report = store.enforce_retention(make_policy(), now)
    # purge boundary is the cutoff (44000) aligned down to the 10s rollup
    # resolution, so points 1000..39000 go and four whole chunks with them
    assert report.purged_chunks == 4
    assert report.freed_points == 39

    # invariant: nothing newer than now - raw_ttl was removed
    cutoff = now - 20_000
    frames = store.query_range("m", cutoff, 65_000, 1000, Aggregator.LAST)
    for ts, value in frames[0].points:
        expected = float((ts // 1000) - 1) if ts <= 64_000 else None
        assert value == expected

    # the purged region is answered from complete rollup buckets
    frames = store.query_range("m", 0, 40_000, 10_000, Aggregator.AVG)
    assert_rows_equal(
        frames[0].points,
        [(0, 4.0), (10_000, 13.5), (20_000, 23.5), (30_000, 33.5)],
    )
    store.close()


def test_retention_keeps_rollups_queryable(tmp_path):
    store = SeriesStore.open(tmp_path, chunk_capacity=8)
    key = key_for()
    for i in range(64):
        store.append(key, (i + 1) * 1000, float(i))
    store.enforce_retention(make_policy(), 64_000)

    # old region now answered from the 10s rollup: bucket [10000, 20000)
    # holds raw points 10000..19000 -> values 9..18, average 13.5
    frames = store.query_range("m", 10_000, 20_000, 10_000, Aggregator.AVG)
    assert frames[0].points == [(10_000, pytest.approx(13.5))]
    store.close()

    # rollups survive restart
    reopened = SeriesStore.open(tmp_path)
    frames = reopened.query_range("m", 10_000, 20_000, 10_000, Aggregator.AVG)
    assert frames[0].points == [(10_000, pytest.approx(13.5))]
    reopened.close()


def test_expired_rollups_cascade_completely(tmp_path):
    store = SeriesStore.open(tmp_path, chunk_capacity=8)
    key = key_for()
    for i in range(64):
        store.append(key, (i + 1) * 1000, float(i))
    policy = RetentionPolicy(
        raw_ttl_ms=20_000,
        downsample_rules=(
            RetentionRule(10_000, Aggregator.AVG, 60_000),
            RetentionRule(30_000, Aggregator.AVG, 10**9),
        ),
    )
    store.enforce_retention(policy, 64_000)
    store.enforce_retention(policy, 200_000)

    series = store._series[key.text()]
    assert series.rollups.get(10_000, []) == []
    # 30s buckets built from the 10s averages, no contribution lost:
    # 10s buckets were 4.0, 13.5, 23.5 (bucket 0..30000) and 33.5, 43.5,
    # 53.5 (bucket 30000..60000)
    frames = store.query_range("m", 0, 60_000, 30_000, Aggregator.AVG)
    assert_rows_equal(
        frames[0].points,
        [(0, (4.0 + 13.5 + 23.5) / 3), (30_000, 43.5)],
    )
    store.close()


def test_rollup_source_is_raw_then_next_finer(tmp_path):
    store = SeriesStore.open(tmp_path)
    policy = make_policy()
    assert store.rollup_source_resolution(10_000, policy) == "raw"
    assert store.rollup_source_resolution(30_000, policy) == "10000"
    store.close()


def test_retention_policy_validates_rules():
    with pytest.raises(StoreError):
        RetentionPolicy(downsample_rules=(
            RetentionRule(30_000, Aggregator.AVG, 1),
            RetentionRule(10_000, Aggregator.AVG, 1),
        ))
    with pytest.raises(StoreError):
        RetentionPolicy(downsample_rules=(RetentionRule(10_000, Aggregator.RATE, 1),))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31), st.integers(min_value=1, max_value=200))
def test_retention_never_removes_fresh_points(seed, n_points):
    import tempfile

    rng = random.Random(seed)
    with tempfile.TemporaryDirectory() as d:
        store = SeriesStore.open(d, chunk_capacity=8)
        key = key_for()
        ts = 0
        appended = []
        for _ in range(n_points):
            ts += rng.randint(1000, 3000)
            value = rng.uniform(0, 10)
            store.append(key, ts, value)
            appended.append((ts, value))
        now = ts + rng.randint(0, 10_000)
        policy = RetentionPolicy(
            raw_ttl_ms=rng.choice([5_000, 20_000, 100_000]),
            downsample_rules=(RetentionRule(10_000, Aggregator.AVG, 10**9),),
        )
        store.enforce_retention(policy, now)
        cutoff = now - policy.raw_ttl_ms
        fresh = [(t, v) for t, v in appended if t >= cutoff]
        for t, v in fresh:
            frames = store.query_range("m", t, t + 1000, 1000, Aggregator.LAST)
            assert frames[0].points[0][1] == pytest.approx(v)
        store.close()
