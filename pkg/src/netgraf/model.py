"""Canonical vocabulary: series identity, samples, metric kinds, tool kinds.

Everything here is an immutable value; instances are safe to share across
threads without coordination.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

NAME_RE = re.compile(r"[a-z_][a-z0-9_]*\Z")
# Label values stay free of the characters the canonical text form uses for
# structure, so serialize/parse round-trips without quoting.
VALUE_RE = re.compile(r'[^\s{},="]+\Z')

RESERVED_LABELS = ("node", "tool")


class ModelError(ValueError):
    """Base for series-identity violations."""


class InvalidName(ModelError):
    pass


class DuplicateLabel(ModelError):
    pass


class MissingReservedLabel(ModelError):
    pass


class MetricKind(Enum):
    GAUGE = "gauge"
    COUNTER = "counter"


class ToolKind(Enum):
    """The five built-in collector dialects."""

    PROMETHEUS = "prometheus"
    NETDATA = "netdata"
    NTOPNG = "ntopng"
    PERFSONAR = "perfsonar"
    ZABBIX = "zabbix"


@dataclass(frozen=True)
class LabelSet:
    """Sorted, validated (name, value) pairs identifying one series."""

    pairs: tuple[tuple[str, str], ...]

    def get(self, name: str) -> str | None:
        for k, v in self.pairs:
            if k == name:
                return v
        return None

    def names(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.pairs)

    def as_dict(self) -> dict[str, str]:
        return dict(self.pairs)


@dataclass(frozen=True)
class SeriesKey:
    metric_name: str
    labels: LabelSet

    def text(self) -> str:
        """Canonical text form: name{k1=v1,k2=v2}, sorted keys, no spaces."""
        inner = ",".join(f"{k}={v}" for k, v in self.labels.pairs)
        return f"{self.metric_name}{{{inner}}}"

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class MetricSample:
    key: SeriesKey
    ts: int  # milliseconds since Unix epoch, UTC
    value: float
    kind: MetricKind

    def __post_init__(self) -> None:
        if self.ts <= 0:
            raise ModelError(f"sample ts must be > 0, got {self.ts}")
        if not math.isfinite(self.value):
            raise ModelError(f"sample value must be finite, got {self.value}")


def canonical_series_key(
    metric_name: str,
    labels: Mapping[str, str] | Iterable[tuple[str, str]],
) -> SeriesKey:
    """Build the canonical identity for a series.

    Metric and label names are lowercased, pairs sorted by name. Duplicate
    label names are an error (not last-wins), and the reserved labels
    ``node`` and ``tool`` must be present after normalization.
    """
    if not metric_name:
        raise InvalidName("metric name is empty")
    name = metric_name.lower()
    if not NAME_RE.match(name):
        raise InvalidName(f"invalid metric name {metric_name!r}")

    pairs = labels.items() if isinstance(labels, Mapping) else labels
    normalized: list[tuple[str, str]] = []
    seen: set[str] = set()
    for raw_k, raw_v in pairs:
        k = raw_k.lower()
        if not NAME_RE.match(k):
            raise InvalidName(f"invalid label name {raw_k!r}")
        if k in seen:
            raise DuplicateLabel(f"duplicate label {k!r}")
        seen.add(k)
        if not VALUE_RE.match(raw_v):
            raise InvalidName(f"invalid label value {raw_v!r} for {k!r}")
        normalized.append((k, raw_v))

    for reserved in RESERVED_LABELS:
        if reserved not in seen:
            raise MissingReservedLabel(f"missing reserved label {reserved!r}")

    normalized.sort(key=lambda kv: kv[0])
    return SeriesKey(name, LabelSet(tuple(normalized)))


def parse_series_key(text: str) -> SeriesKey:
    """Inverse of SeriesKey.text() for canonical keys."""
    m = re.match(r"([^{]+)\{(.*)\}\Z", text)
    if not m:
        raise InvalidName(f"unparseable series key {text!r}")
    name, inner = m.group(1), m.group(2)
    pairs: list[tuple[str, str]] = []
    if inner:
        for part in inner.split(","):
            k, sep, v = part.partition("=")
            if not sep:
                raise InvalidName(f"bad label pair {part!r} in {text!r}")
            pairs.append((k, v))
    return canonical_series_key(name, pairs)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: MetricKind
    unit: str


# The built-in canonical metrics every deployment carries: the TCP-health
# counter plus the two selected network gauges.
BUILTIN_CATALOG = (
    CatalogEntry("tcp_retransmits_total", MetricKind.COUNTER, "count"),
    CatalogEntry("throughput_bytes_per_second", MetricKind.GAUGE, "bytes/s"),
    CatalogEntry("packet_loss_ratio", MetricKind.GAUGE, "ratio"),
)

# Pipeline health metrics; these bypass the ingest allowlist so the monitor
# can always monitor itself.
SELF_METRICS = (
    CatalogEntry("scrape_duration_ms", MetricKind.GAUGE, "ms"),
    CatalogEntry("scrape_failures_total", MetricKind.COUNTER, "count"),
    CatalogEntry("samples_dropped_total", MetricKind.COUNTER, "count"),
)

SELF_TOOL = "netgraf"


def canonical_metric_catalog() -> list[tuple[str, MetricKind, str]]:
    """The always-present built-in metrics as (name, kind, unit) rows."""
    return [(e.name, e.kind, e.unit) for e in BUILTIN_CATALOG]


class MetricCatalog:
    """Built-in metrics plus runtime-registered extensions."""

    def __init__(self) -> None:
        self._entries: dict[str, CatalogEntry] = {
            e.name: e for e in BUILTIN_CATALOG + SELF_METRICS
        }

    def register(self, name: str, kind: MetricKind, unit: str) -> None:
        if not NAME_RE.match(name):
            raise InvalidName(f"invalid metric name {name!r}")
        if name in self._entries:
            raise DuplicateLabel(f"metric {name!r} already registered")
        self._entries[name] = CatalogEntry(name, kind, unit)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def kind_of(self, name: str) -> MetricKind | None:
        entry = self._entries.get(name)
        return entry.kind if entry else None

    def entries(self) -> list[CatalogEntry]:
        return sorted(self._entries.values(), key=lambda e: e.name)
