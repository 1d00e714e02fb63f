"""Scrape scheduling, filtering, admission, and the ingest loop.

The pipeline owns one logical schedule. Due collectors fetch through
their adapters on a bounded thread pool, results are normalized to the
canonical catalog, filtered against the metric allowlist, checked by
per-series admission rules, and appended to the store. Every scrape
also records self-metrics (duration, failure count, dropped-sample
count) under the reserved tool label, bypassing the allowlist: the
monitor must monitor itself.
"""

from __future__ import annotations

import concurrent.futures
import random
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .adapters import (
    AdapterError,
    AdapterRegistry,
    CollectorSpec,
    FetchWindow,
    MappingTable,
    default_registry,
    normalize,
)
from .clock import Clock, SystemClock
from .model import (
    BUILTIN_CATALOG,
    SELF_METRICS,
    SELF_TOOL,
    MetricSample,
    SeriesKey,
    canonical_series_key,
)
from .store import OutOfOrderAppend, SeriesStore

SELF_METRIC_NAMES = frozenset(entry.name for entry in SELF_METRICS)
_SELF_KINDS = {entry.name: entry.kind for entry in SELF_METRICS}

# how far back a fetch window may reach after an outage; bounds the
# size of history backfills from archive-style tools
MAX_LOOKBACK_MS = 3_600_000


class PipelineError(Exception):
    pass


class DuplicateCollector(PipelineError):
    pass


class UnknownCollector(PipelineError):
    pass


# ---------------------------------------------------------------------------
# scheduling


class ScrapePlan:
    """Tracks when each collector is next due.

    Each entry keeps an unjittered base on the interval grid plus a
    fresh uniform jitter in [0, jitter_ms] applied per run. Jitter
    never accumulates into the grid, so over T ms a collector runs
    ~T/interval times (exact to +-1 while jitter < interval). A
    collector that missed many intervals (suspend, clock jump) is
    returned once and its base realigned a single step past `now`:
    catch-up never bursts.
    """

    def __init__(
        self,
        intervals: Mapping[str, int],
        start_ms: int,
        jitter_ms: int = 500,
        rng: random.Random | None = None,
    ):
        if jitter_ms < 0:
            raise PipelineError("jitter_ms must be >= 0")
        self._jitter_ms = jitter_ms
        self._rng = rng if rng is not None else random.Random()
        self._intervals: dict[str, int] = {}
        self._base: dict[str, int] = {}
        self._due: dict[str, int] = {}
        for spec_id, interval_ms in intervals.items():
            self.add(spec_id, interval_ms, start_ms)

    def _jitter(self) -> int:
        if self._jitter_ms == 0:
            return 0
        return self._rng.randint(0, self._jitter_ms)

    def add(self, spec_id: str, interval_ms: int, first_due_ms: int) -> None:
        if spec_id in self._due:
            raise DuplicateCollector(spec_id)
        if interval_ms <= 0:
            raise PipelineError(f"{spec_id}: interval must be positive")
        self._intervals[spec_id] = interval_ms
        self._base[spec_id] = first_due_ms
        self._due[spec_id] = first_due_ms + self._jitter()

    def remove(self, spec_id: str) -> None:
        self._due.pop(spec_id, None)
        self._base.pop(spec_id, None)
        self._intervals.pop(spec_id, None)

    def next_due(self, spec_id: str) -> int:
        return self._due[spec_id]

    def earliest_due(self) -> int | None:
        return min(self._due.values()) if self._due else None

    def schedule_tick(self, now_ms: int) -> list[str]:
        """All collectors due at now_ms, their entries advanced."""
        due = [spec_id for spec_id, at in self._due.items() if at <= now_ms]
        for spec_id in due:
            interval = self._intervals[spec_id]
            # collapse missed runs into this one: the base lands exactly
            # one interval step past now, never scheduling a backlog burst
            steps = (now_ms - self._base[spec_id]) // interval + 1
            self._base[spec_id] += steps * interval
            self._due[spec_id] = self._base[spec_id] + self._jitter()
        return due


# ---------------------------------------------------------------------------
# filtering and admission


@dataclass(frozen=True)
class FilterPolicy:
    """Allowlist of canonical metric names; everything else is dropped.
    This is the elimination step: collected series that earned no place
    in the catalog never reach storage.
    """

    allowlist: frozenset[str]

    def __post_init__(self) -> None:
        if not self.allowlist:
            raise PipelineError("allowlist must not be empty")

    @classmethod
    def catalog_default(cls) -> "FilterPolicy":
        return cls(frozenset(e.name for e in BUILTIN_CATALOG))


def apply_filter(
    policy: FilterPolicy, samples: list[MetricSample]
) -> list[MetricSample]:
    return [s for s in samples if s.key.metric_name in policy.allowlist]


class AdmissionReason(Enum):
    OUT_OF_ORDER = "out_of_order"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class Decision:
    accepted: bool
    reason: AdmissionReason | None = None


ACCEPT = Decision(True)

# placeholder value for series restored from a store tail: the ts is
# known but the value is not, so an equal-ts sample cannot prove itself
# distinct and is treated as a duplicate
_UNKNOWN = object()


class AdmissionState:
    """Per-series last-accepted timestamps, with a configurable
    out-of-order tolerance window.

    Samples older than (last - window) are rejected OUT_OF_ORDER; a
    sample at exactly the last timestamp with an equal value is a
    DUPLICATE (archive pulls re-deliver window edges); everything else
    is accepted and advances the tail.
    """

    def __init__(self, out_of_order_window_ms: int = 0):
        if out_of_order_window_ms < 0:
            raise PipelineError("out_of_order_window_ms must be >= 0")
        self.out_of_order_window_ms = out_of_order_window_ms
        self._last: dict[str, tuple[int, object]] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_store(
        cls, store: SeriesStore, out_of_order_window_ms: int = 0
    ) -> "AdmissionState":
        state = cls(out_of_order_window_ms)
        for key_text, last_ts in store.series_tails().items():
            state._last[key_text] = (last_ts, _UNKNOWN)
        return state

    def admit(self, sample: MetricSample, window_ms: int | None = None) -> Decision:
        window = self.out_of_order_window_ms if window_ms is None else window_ms
        key_text = sample.key.text()
        with self._lock:
            tail = self._last.get(key_text)
            if tail is None:
                self._last[key_text] = (sample.ts, sample.value)
                return ACCEPT
            last_ts, last_value = tail
            if sample.ts < last_ts - window:
                return Decision(False, AdmissionReason.OUT_OF_ORDER)
            if sample.ts == last_ts and (
                last_value is _UNKNOWN or sample.value == last_value
            ):
                return Decision(False, AdmissionReason.DUPLICATE)
            if sample.ts >= last_ts:
                self._last[key_text] = (sample.ts, sample.value)
            return ACCEPT

    def tail_ts(self, key_text: str) -> int | None:
        with self._lock:
            tail = self._last.get(key_text)
            return tail[0] if tail else None


# ---------------------------------------------------------------------------
# the pipeline


@dataclass(frozen=True)
class PipelineConfig:
    jitter_ms: int = 500
    parallelism: int = 8
    tick_ms: int = 200
    allowlist: frozenset[str] = field(
        default_factory=lambda: frozenset(e.name for e in BUILTIN_CATALOG)
    )
    # archives backfill, scraped sources do not
    out_of_order_windows: Mapping[str, int] = field(
        default_factory=lambda: {"perfsonar": 60_000}
    )
    default_window_ms: int = 0

    def window_for_tool(self, tool: str) -> int:
        return self.out_of_order_windows.get(tool, self.default_window_ms)


@dataclass
class ScrapeOutcome:
    spec_id: str
    ok: bool
    duration_ms: float
    samples_in: int = 0
    samples_stored: int = 0
    samples_dropped: int = 0
    error: str = ""


class Pipeline:
    """Continuous scrape loop over a set of collectors.

    All adapter failures are contained: they count toward
    scrape_failures_total and the loop moves on. Only store corruption
    propagates, because nothing downstream is trustworthy after that.
    """

    def __init__(
        self,
        specs: Iterable[CollectorSpec],
        store: SeriesStore,
        policy: FilterPolicy | None = None,
        config: PipelineConfig | None = None,
        clock: Clock | None = None,
        rng: random.Random | None = None,
        registry: AdapterRegistry | None = None,
        mapping_table: MappingTable | None = None,
    ):
        self.config = config if config is not None else PipelineConfig()
        self.policy = policy if policy is not None else FilterPolicy(self.config.allowlist)
        self.store = store
        self.clock: Clock = clock if clock is not None else SystemClock()
        self._registry = registry if registry is not None else default_registry
        self._mapping_table = mapping_table
        self._lock = threading.Lock()
        self._specs: dict[str, CollectorSpec] = {}
        self._plan = ScrapePlan(
            {}, start_ms=0, jitter_ms=self.config.jitter_ms, rng=rng
        )
        self._admission = AdmissionState.from_store(store)
        self._in_flight: set[str] = set()
        self._last_success: dict[str, int] = {}
        self._last_attempt: dict[str, int] = {}
        self._failures: dict[str, int] = {}
        self._dropped: dict[str, int] = {}
        self._stop = threading.Event()
        self._executor = concurrent.futures.ThreadPoolExecutor(
            max_workers=self.config.parallelism, thread_name_prefix="scrape"
        )
        start_ms = self.clock.now_ms()
        for spec in specs:
            self._register(spec, start_ms)

    # -- collector management (also the runtime plug-in path)

    def _register(self, spec: CollectorSpec, first_due_ms: int) -> None:
        with self._lock:
            if spec.id in self._specs:
                raise DuplicateCollector(spec.id)
            self._registry.get(spec.tool)  # unknown tool fails fast
            self._specs[spec.id] = spec
            if spec.enabled:
                self._plan.add(spec.id, spec.interval_ms, first_due_ms)

    def add_collector(self, spec: CollectorSpec) -> None:
        """Plug in a collector at runtime; first scrape is due now."""
        self._register(spec, self.clock.now_ms())

    def remove_collector(self, spec_id: str) -> None:
        with self._lock:
            if spec_id not in self._specs:
                raise UnknownCollector(spec_id)
            del self._specs[spec_id]
            self._plan.remove(spec_id)

    def collectors(self) -> list[CollectorSpec]:
        with self._lock:
            return list(self._specs.values())

    def collector_status(self) -> list[dict]:
        with self._lock:
            rows = []
            for spec in self._specs.values():
                rows.append(
                    {
                        "id": spec.id,
                        "tool": spec.tool,
                        "node": spec.node_label,
                        "enabled": spec.enabled,
                        "interval_ms": spec.interval_ms,
                        "last_success_ms": self._last_success.get(spec.id),
                        "last_attempt_ms": self._last_attempt.get(spec.id),
                        "failures": self._failures.get(spec.id, 0),
                    }
                )
            return rows

    # -- the loop

    def tick(self) -> list[concurrent.futures.Future]:
        """One scheduler pass: launch every due, not-in-flight scrape."""
        now = self.clock.now_ms()
        futures = []
        with self._lock:
            due = self._plan.schedule_tick(now)
            specs = []
            for spec_id in due:
                if spec_id in self._in_flight:
                    continue  # previous fetch still running; never overlap
                spec = self._specs.get(spec_id)
                if spec is None or not spec.enabled:
                    continue
                self._in_flight.add(spec_id)
                specs.append(spec)
        for spec in specs:
            futures.append(self._executor.submit(self._scrape_guarded, spec))
        return futures

    def run_until(self, deadline_ms: int) -> None:
        """Drive the loop synchronously until the clock passes the
        deadline, waiting out each tick's fetches (test entry point).
        """
        while not self._stop.is_set() and self.clock.now_ms() < deadline_ms:
            futures = self.tick()
            if futures:
                concurrent.futures.wait(futures)
            self.clock.sleep_ms(self.config.tick_ms)

    def run_forever(self) -> None:
        while not self._stop.is_set():
            self.tick()
            self.clock.sleep_ms(self.config.tick_ms)

    def stop(self) -> None:
        self._stop.set()
        self._executor.shutdown(wait=True)

    # -- one scrape

    def _scrape_guarded(self, spec: CollectorSpec) -> ScrapeOutcome:
        try:
            return self._scrape(spec)
        finally:
            with self._lock:
                self._in_flight.discard(spec.id)

    def _fetch_window(self, spec: CollectorSpec, now: int) -> FetchWindow:
        with self._lock:
            t0 = self._last_success.get(spec.id, now - spec.interval_ms)
        t0 = max(t0, now - MAX_LOOKBACK_MS)
        if t0 >= now:
            t0 = now - 1
        return FetchWindow(t0, now)

    def _scrape(self, spec: CollectorSpec) -> ScrapeOutcome:
        adapter = self._registry.get(spec.tool)
        now = self.clock.now_ms()
        window = self._fetch_window(spec, now)
        started_wall = time.monotonic()
        with self._lock:
            self._last_attempt[spec.id] = now
        try:
            readings = adapter.fetch(spec, window)
        except AdapterError as exc:
            duration = (time.monotonic() - started_wall) * 1000.0
            with self._lock:
                self._failures[spec.id] = self._failures.get(spec.id, 0) + 1
            outcome = ScrapeOutcome(
                spec.id, ok=False, duration_ms=duration, error=str(exc)
            )
            self._record_self_metrics(spec, outcome)
            return outcome
        duration = (time.monotonic() - started_wall) * 1000.0
        samples = normalize(
            spec.tool, spec.node_label, readings, table=self._mapping_table
        )
        kept = apply_filter(self.policy, samples)
        dropped = len(samples) - len(kept)
        # history tools deliver newest-first; admission and the store
        # need each series' batch in ascending time order
        kept.sort(key=lambda s: (s.key.text(), s.ts))
        stored = 0
        window_ms = self.config.window_for_tool(spec.tool)
        for sample in kept:
            decision = self._admission.admit(sample, window_ms)
            if not decision.accepted:
                dropped += 1
                continue
            try:
                self.store.append(sample.key, sample.ts, sample.value)
            except OutOfOrderAppend:
                # admission tolerated it inside the window, but the
                # store is strictly ordered; contained, counted drop
                dropped += 1
            else:
                stored += 1
        with self._lock:
            self._last_success[spec.id] = now
            self._dropped[spec.id] = self._dropped.get(spec.id, 0) + dropped
        outcome = ScrapeOutcome(
            spec.id,
            ok=True,
            duration_ms=duration,
            samples_in=len(samples),
            samples_stored=stored,
            samples_dropped=dropped,
        )
        self._record_self_metrics(spec, outcome)
        return outcome

    # -- self-metrics

    def _self_key(self, name: str, spec: CollectorSpec) -> SeriesKey:
        return canonical_series_key(
            name,
            [
                ("collector", spec.id),
                ("node", spec.node_label),
                ("tool", SELF_TOOL),
            ],
        )

    def _record_self_metrics(self, spec: CollectorSpec, outcome: ScrapeOutcome) -> None:
        ts = self.clock.now_ms()
        with self._lock:
            failures = self._failures.get(spec.id, 0)
            dropped = self._dropped.get(spec.id, 0)
        values = {
            "scrape_duration_ms": outcome.duration_ms,
            "scrape_failures_total": float(failures),
            "samples_dropped_total": float(dropped),
        }
        for name, value in values.items():
            key = self._self_key(name, spec)
            sample = MetricSample(key=key, ts=ts, value=value, kind=_SELF_KINDS[name])
            decision = self._admission.admit(sample)
            if not decision.accepted:
                continue
            try:
                self.store.append(key, sample.ts, sample.value)
            except OutOfOrderAppend:
                pass  # same-ms rescrape; drop quietly
