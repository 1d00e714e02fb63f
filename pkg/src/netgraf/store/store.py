"""Embedded time-series store: per-series chunks, WAL durability, label
index, range queries with bucket aggregation, downsampling and retention.

One process owns a data directory at a time (advisory lock). Appends for
distinct series may run concurrently; readers see a consistent snapshot of
whatever was visible when the query started.
"""

from __future__ import annotations

import contextlib
import fcntl
import json
import logging
import os
import shutil
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from ..model import SeriesKey, parse_series_key
from . import segments, wal
from .errors import (
    CorruptSegment,
    InvalidRange,
    InvalidSelector,
    IoError,
    OutOfOrderAppend,
    StoreClosed,
    StoreError,
)
from .selector import Selector, parse_selector

log = logging.getLogger(__name__)

DEFAULT_CHUNK_CAPACITY = 1024
MIN_QUERY_STEP_MS = 1000


class Aggregator(Enum):
    AVG = "avg"
    MIN = "min"
    MAX = "max"
    LAST = "last"
    SUM = "sum"
    RATE = "rate"  # query-only: counter -> per-second gauge, then AVG buckets


@dataclass
class Chunk:
    series: SeriesKey
    points: list[tuple[int, float]]
    sealed: bool = False

    @property
    def t_min(self) -> int:
        return self.points[0][0]

    @property
    def t_max(self) -> int:
        return self.points[-1][0]


@dataclass(frozen=True)
class RetentionRule:
    resolution_ms: int
    aggregator: Aggregator
    ttl_ms: int


@dataclass(frozen=True)
class RetentionPolicy:
    raw_ttl_ms: int = 7 * 24 * 3600 * 1000
    downsample_rules: tuple[RetentionRule, ...] = ()

    def __post_init__(self) -> None:
        resolutions = [r.resolution_ms for r in self.downsample_rules]
        if resolutions != sorted(set(resolutions)):
            raise StoreError("downsample resolutions must be strictly increasing")
        for rule in self.downsample_rules:
            if rule.aggregator == Aggregator.RATE:
                raise StoreError("RATE is not a storage aggregator")


@dataclass(frozen=True)
class PurgeReport:
    purged_chunks: int
    freed_points: int


@dataclass
class QueryFrame:
    series: SeriesKey
    points: list[tuple[int, float | None]]


def rate(points: list[tuple[int, float]]) -> list[tuple[int, float]]:
    """Per-second rate of a counter, reset-aware.

    A value drop is a counter reset: the new value is taken as the increase
    since the reset. Emitted at the later timestamp; fewer than two points
    yield nothing.
    """
    out: list[tuple[int, float]] = []
    for (t1, v1), (t2, v2) in zip(points, points[1:]):
        delta = v2 - v1 if v2 >= v1 else v2
        out.append((t2, delta / ((t2 - t1) / 1000.0)))
    return out


def _aggregate(values: list[float], agg: Aggregator) -> float:
    if agg == Aggregator.AVG:
        return sum(values) / len(values)
    if agg == Aggregator.MIN:
        return min(values)
    if agg == Aggregator.MAX:
        return max(values)
    if agg == Aggregator.LAST:
        return values[-1]
    if agg == Aggregator.SUM:
        return sum(values)
    raise StoreError(f"{agg} cannot aggregate a bucket directly")


def downsample(
    points: list[tuple[int, float]], resolution_ms: int, agg: Aggregator
) -> list[tuple[int, float]]:
    """Bucket sorted points into [k*res, (k+1)*res); empty buckets omitted.

    Output timestamps are bucket starts.
    """
    out: list[tuple[int, float]] = []
    bucket_start: int | None = None
    values: list[float] = []
    for ts, v in points:
        start = (ts // resolution_ms) * resolution_ms
        if start != bucket_start:
            if values:
                out.append((bucket_start, _aggregate(values, agg)))
            bucket_start = start
            values = []
        values.append(v)
    if values:
        out.append((bucket_start, _aggregate(values, agg)))
    return out


@dataclass
class _Series:
    key: SeriesKey
    sealed: list[Chunk] = field(default_factory=list)
    open_points: list[tuple[int, float]] = field(default_factory=list)
    # resolution_ms -> sorted rollup points
    rollups: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    last_ts: int = 0

    def raw_points(self, t0: int, t1: int) -> list[tuple[int, float]]:
        out: list[tuple[int, float]] = []
        for chunk in self.sealed:
            if chunk.t_max < t0 or chunk.t_min >= t1:
                continue
            out.extend(p for p in chunk.points if t0 <= p[0] < t1)
        out.extend(p for p in self.open_points if t0 <= p[0] < t1)
        return out

    def raw_min_ts(self) -> int | None:
        if self.sealed:
            return self.sealed[0].t_min
        if self.open_points:
            return self.open_points[0][0]
        return None


class SeriesStore:
    """Open with SeriesStore.open(); recovery of prior state is implicit."""

    def __init__(
        self,
        data_dir: Path,
        chunk_capacity: int = DEFAULT_CHUNK_CAPACITY,
        fsync: bool = False,
        hold_lock: bool = True,
    ):
        self.data_dir = Path(data_dir)
        self.chunk_capacity = chunk_capacity
        self._lock = threading.RLock()
        self._series: dict[str, _Series] = {}
        self._by_metric: dict[str, set[str]] = {}
        self._by_label: dict[tuple[str, str], set[str]] = {}
        self._closed = False
        self.corrupt_segments: list[CorruptSegment] = []

        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / "index").mkdir(exist_ok=True)
        self._lock_fh = None
        if hold_lock:
            self._acquire_dir_lock()

        self._wal = wal.WriteAheadLog(self.data_dir / "wal.log", fsync=fsync)
        self._segments = segments.SegmentWriter(self.data_dir / "segments")
        self._rollup_writers: dict[int, segments.SegmentWriter] = {}

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def open(cls, data_dir: Path | str, **kwargs) -> "SeriesStore":
        store = cls(Path(data_dir), **kwargs)
        store._recover()
        return store

    def _acquire_dir_lock(self) -> None:
        lock_path = self.data_dir / "LOCK"
        self._lock_fh = open(lock_path, "w")
        try:
            fcntl.flock(self._lock_fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            self._lock_fh.close()
            self._lock_fh = None
            raise StoreError(f"data_dir {self.data_dir} is locked by another process") from exc

    def _recover(self) -> None:
        seg_dir = self.data_dir / "segments"
        for path in sorted(seg_dir.glob("*.seg")):
            self._load_segment_file(path, resolution=None)
        rollup_root = self.data_dir / "rollups"
        if rollup_root.is_dir():
            for res_dir in sorted(rollup_root.iterdir()):
                if not res_dir.is_dir():
                    continue
                resolution = int(res_dir.name)
                for path in sorted(res_dir.glob("*.seg")):
                    self._load_segment_file(path, resolution=resolution)

        for key_text, ts, value in wal.replay(self.data_dir / "wal.log"):
            series = self._series.get(key_text)
            if series is not None and ts <= self._sealed_max(series):
                continue  # already persisted in a sealed chunk
            self._ingest_recovered(key_text, ts, value)
        self._write_index_snapshot()

    def _load_segment_file(self, path: Path, resolution: int | None) -> None:
        loaded: list[tuple[str, list[tuple[int, float]]]] = []
        corrupt: CorruptSegment | None = None
        try:
            for key_text, points in segments.read_segment(path):
                loaded.append((key_text, points))
        except CorruptSegment as exc:
            corrupt = exc
        for key_text, points in loaded:
            self._install_chunk(key_text, points, resolution)
        if corrupt is not None:
            self.corrupt_segments.append(corrupt)
            log.warning("quarantining %s", corrupt)
            path.rename(path.with_suffix(".quarantined"))
            # Verified chunks from the bad file are re-persisted so they
            # survive the quarantine.
            for key_text, points in loaded:
                if resolution is None:
                    self._segments.write_chunk(key_text, points)
                else:
                    self._rollup_writer(resolution).write_chunk(key_text, points)

    def _install_chunk(
        self, key_text: str, points: list[tuple[int, float]], resolution: int | None
    ) -> None:
        series = self._get_or_create(key_text)
        if resolution is None:
            series.sealed.append(Chunk(series.key, points, sealed=True))
            series.sealed.sort(key=lambda c: c.t_min)
            series.last_ts = max(series.last_ts, points[-1][0])
        else:
            existing = series.rollups.setdefault(resolution, [])
            known = {ts for ts, _ in existing}
            existing.extend(p for p in points if p[0] not in known)
            existing.sort()

    def _ingest_recovered(self, key_text: str, ts: int, value: float) -> None:
        series = self._get_or_create(key_text)
        if ts <= series.last_ts:
            return
        series.open_points.append((ts, value))
        series.last_ts = ts
        if len(series.open_points) >= self.chunk_capacity:
            self._seal(series)

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._checkpoint_wal()
            self._write_index_snapshot()
            self._closed = True
            self._wal.close()
            self._segments.close()
            for writer in self._rollup_writers.values():
                writer.close()
            if self._lock_fh is not None:
                self._lock_fh.close()
                self._lock_fh = None

    def crash(self) -> None:
        """Abrupt-termination simulation: drop OS handles, no checkpoint."""
        self._closed = True
        with contextlib.suppress(Exception):
            self._wal._fh.close()
        with contextlib.suppress(Exception):
            self._segments.close()
        for writer in self._rollup_writers.values():
            with contextlib.suppress(Exception):
                writer.close()
        if self._lock_fh is not None:
            self._lock_fh.close()
            self._lock_fh = None

    # -- writes ------------------------------------------------------------

    def append(self, series_key: SeriesKey, ts: int, value: float) -> None:
        key_text = series_key.text()
        with self._lock:
            if self._closed:
                raise StoreClosed("store is closed")
            series = self._series.get(key_text)
            if series is not None and ts <= series.last_ts:
                raise OutOfOrderAppend(
                    f"{key_text}: append ts {ts} <= tail {series.last_ts}"
                )
            try:
                self._wal.append(key_text, ts, value)
            except OSError as exc:
                raise IoError(str(exc)) from exc
            if series is None:
                series = self._get_or_create(key_text, series_key)
            series.open_points.append((ts, value))
            series.last_ts = ts
            if len(series.open_points) >= self.chunk_capacity:
                self._seal(series)

    def _seal(self, series: _Series) -> None:
        points = series.open_points
        series.sealed.append(Chunk(series.key, points, sealed=True))
        series.open_points = []
        try:
            self._segments.write_chunk(series.key.text(), points)
        except OSError as exc:
            raise IoError(str(exc)) from exc

    def _get_or_create(self, key_text: str, key: SeriesKey | None = None) -> _Series:
        series = self._series.get(key_text)
        if series is None:
            if key is None:
                key = parse_series_key(key_text)
            series = _Series(key)
            self._series[key_text] = series
            self._by_metric.setdefault(key.metric_name, set()).add(key_text)
            for pair in key.labels.pairs:
                self._by_label.setdefault(pair, set()).add(key_text)
        return series

    @staticmethod
    def _sealed_max(series: _Series) -> int:
        return series.sealed[-1].t_max if series.sealed else 0

    # -- reads -------------------------------------------------------------

    def _match(self, selector: Selector) -> list[_Series]:
        if selector.metric_pattern and "*" not in selector.metric_pattern:
            candidates = self._by_metric.get(selector.metric_pattern, set())
        elif selector.matchers:
            candidates = self._by_label.get(selector.matchers[0], set())
        else:
            candidates = set(self._series)
        return [
            self._series[k]
            for k in sorted(candidates)
            if selector.matches(self._series[k].key)
        ]

    def list_series(self, matcher: str | Selector) -> list[SeriesKey]:
        selector = matcher if isinstance(matcher, Selector) else parse_selector(matcher)
        with self._lock:
            return [s.key for s in self._match(selector)]

    def series_tails(self) -> dict[str, int]:
        """Canonical key text -> last appended timestamp."""
        with self._lock:
            return {k: s.last_ts for k, s in self._series.items()}

    def _collect_points(
        self, series: _Series, t0: int, t1: int
    ) -> list[tuple[int, float]]:
        points = series.raw_points(t0, t1)
        cutoff = series.raw_min_ts()
        if cutoff is None:
            cutoff = t1
        # Fill regions older than raw coverage from the finest rollup first.
        for resolution in sorted(series.rollups):
            older = [
                p for p in series.rollups[resolution] if t0 <= p[0] < min(t1, cutoff)
            ]
            if older:
                points = older + points
                cutoff = older[0][0]
        points.sort()
        return points

    def query_range(
        self,
        selector: str | Selector,
        t0: int,
        t1: int,
        step_ms: int,
        agg: Aggregator,
    ) -> list[QueryFrame]:
        """One frame per matching series; buckets [t0+k*step, t0+(k+1)*step)
        for bucket starts below t1. Empty buckets carry None, never an
        interpolated value.
        """
        if t0 >= t1:
            raise InvalidRange(f"t0 {t0} must be < t1 {t1}")
        if step_ms < MIN_QUERY_STEP_MS:
            raise InvalidRange(f"step_ms must be >= {MIN_QUERY_STEP_MS}")
        sel = selector if isinstance(selector, Selector) else parse_selector(selector)

        with self._lock:
            matched = self._match(sel)
            frames: list[QueryFrame] = []
            for series in matched:
                points = self._collect_points(series, t0, t1)
                if agg == Aggregator.RATE:
                    points = rate(points)
                    bucket_agg = Aggregator.AVG
                else:
                    bucket_agg = agg
                n_buckets = (t1 - t0 + step_ms - 1) // step_ms
                buckets: list[list[float]] = [[] for _ in range(n_buckets)]
                for ts, v in points:
                    idx = (ts - t0) // step_ms
                    if 0 <= idx < n_buckets:
                        buckets[idx].append(v)
                out: list[tuple[int, float | None]] = []
                for k in range(n_buckets):
                    start = t0 + k * step_ms
                    value = _aggregate(buckets[k], bucket_agg) if buckets[k] else None
                    out.append((start, value))
                frames.append(QueryFrame(series.key, out))
        frames.sort(key=lambda f: f.series.text())
        return frames

    # -- retention ---------------------------------------------------------

    def rollup_source_resolution(self, target_resolution_ms: int, policy: RetentionPolicy) -> str:
        """Which data feeds a rollup level: raw for the finest rule, the
        next-finer rollup otherwise. Averages of averages are never built
        from coarser levels.
        """
        resolutions = [r.resolution_ms for r in policy.downsample_rules]
        idx = resolutions.index(target_resolution_ms)
        return "raw" if idx == 0 else str(resolutions[idx - 1])

    def enforce_retention(self, policy: RetentionPolicy, now: int) -> PurgeReport:
        """Purge raw data older than the ttl, folding it into rollups first.

        A rollup bucket is written exactly once and only when complete, so
        the purge boundary is aligned down to the target resolution and
        capped below anything that could still contribute to a bucket (the
        oldest retained point and the append tail).
        """
        purged_chunks = 0
        freed_points = 0
        rules = policy.downsample_rules
        with self._lock:
            if self._closed:
                raise StoreClosed("store is closed")
            for series in self._series.values():
                boundary = now - policy.raw_ttl_ms
                if rules:
                    res0 = rules[0].resolution_ms
                    cap = (
                        series.open_points[0][0]
                        if series.open_points
                        else series.last_ts + 1
                    )
                    boundary = (min(boundary, cap) // res0) * res0
                expired: list[tuple[int, float]] = []
                kept: list[Chunk] = []
                for chunk in series.sealed:
                    if chunk.t_max < boundary:
                        expired.extend(chunk.points)
                        purged_chunks += 1
                    elif chunk.t_min < boundary:
                        head = [p for p in chunk.points if p[0] < boundary]
                        expired.extend(head)
                        kept.append(Chunk(series.key, chunk.points[len(head):], sealed=True))
                    else:
                        kept.append(chunk)
                if expired:
                    series.sealed = kept
                    freed_points += len(expired)
                    if rules:
                        self._merge_rollup(series, rules[0], expired)

                # Cascade: expired rollup points feed the next-coarser level.
                # `arrival` floors where future emissions into a level can
                # land, so no emitted coarse bucket can grow afterwards.
                arrival = series.raw_min_ts()
                if arrival is None:
                    arrival = series.last_ts + 1
                for i, rule in enumerate(rules):
                    arrival = (arrival // rule.resolution_ms) * rule.resolution_ms
                    points = series.rollups.get(rule.resolution_ms, [])
                    nxt = rules[i + 1] if i + 1 < len(rules) else None
                    boundary = now - rule.ttl_ms
                    if nxt is not None:
                        boundary = min(boundary, arrival)
                        boundary = (boundary // nxt.resolution_ms) * nxt.resolution_ms
                    head = [p for p in points if p[0] < boundary]
                    if head:
                        series.rollups[rule.resolution_ms] = points[len(head):]
                        freed_points += len(head)
                        if nxt is not None:
                            self._merge_rollup(series, nxt, head)
                    remaining = series.rollups.get(rule.resolution_ms, [])
                    if remaining:
                        arrival = min(arrival, remaining[0][0])
            self._persist_rollups()
            self._rewrite_raw_segments()
            self._checkpoint_wal()
        return PurgeReport(purged_chunks, freed_points)

    def _merge_rollup(
        self, series: _Series, rule: RetentionRule, finer: list[tuple[int, float]]
    ) -> None:
        rolled = downsample(sorted(finer), rule.resolution_ms, rule.aggregator)
        target = series.rollups.setdefault(rule.resolution_ms, [])
        known = {ts for ts, _ in target}
        target.extend(p for p in rolled if p[0] not in known)
        target.sort()

    def _rollup_writer(self, resolution: int) -> segments.SegmentWriter:
        writer = self._rollup_writers.get(resolution)
        if writer is None:
            writer = segments.SegmentWriter(self.data_dir / "rollups" / str(resolution))
            self._rollup_writers[resolution] = writer
        return writer

    def _persist_rollups(self) -> None:
        # Rewrite rollup storage wholesale; rollups only change at retention
        # time, which is rare.
        for resolution in {r for s in self._series.values() for r in s.rollups}:
            res_dir = self.data_dir / "rollups" / str(resolution)
            if self._rollup_writers.get(resolution):
                self._rollup_writers[resolution].close()
                del self._rollup_writers[resolution]
            if res_dir.exists():
                shutil.rmtree(res_dir)
            writer = self._rollup_writer(resolution)
            for key_text in sorted(self._series):
                points = self._series[key_text].rollups.get(resolution)
                if points:
                    writer.write_chunk(key_text, points)

    def _rewrite_raw_segments(self) -> None:
        seg_dir = self.data_dir / "segments"
        self._segments.close()
        for path in seg_dir.glob("*.seg"):
            path.unlink()
        self._segments = segments.SegmentWriter(seg_dir)
        for key_text in sorted(self._series):
            for chunk in self._series[key_text].sealed:
                self._segments.write_chunk(key_text, chunk.points)

    def _checkpoint_wal(self) -> None:
        records = [
            (key_text, ts, value)
            for key_text in sorted(self._series)
            for ts, value in self._series[key_text].open_points
        ]
        self._wal.rewrite(records)

    def _write_index_snapshot(self) -> None:
        # Cache only; always rebuilt from segments + WAL on open.
        snapshot = {"series": sorted(self._series)}
        path = self.data_dir / "index" / "series.json"
        with contextlib.suppress(OSError):
            path.write_text(json.dumps(snapshot, indent=1))


__all__ = [
    "Aggregator",
    "Chunk",
    "PurgeReport",
    "QueryFrame",
    "RetentionPolicy",
    "RetentionRule",
    "SeriesStore",
    "downsample",
    "rate",
]
