"""Source-metric mapping and unit normalization.

The mapping table decides which tool readings survive ingestion: a reading
whose source metric matches no row is dropped (and counted by the caller),
which is how the catalog stays at the few metrics that matter instead of
everything five tools can emit. Rows live in an editable data file; plug-in
adapters may ship extra rows.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fnmatch import fnmatchcase
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable

from ..model import (
    RESERVED_LABELS,
    MetricCatalog,
    MetricSample,
    ModelError,
    ToolKind,
    canonical_series_key,
)
from .base import RawReading

# the three built-in conversions; all exact
CONVERSIONS: dict[str, Callable[[float], float]] = {
    "none": lambda v: v,
    "bits_to_bytes": lambda v: v / 8,
    "kilobits_to_bytes": lambda v: v * 125,
    "percent_to_ratio": lambda v: v / 100,
}


@dataclass(frozen=True)
class MappingRule:
    tool: str
    pattern: str  # literal source metric, or a glob when it contains '*'
    canonical_metric: str
    conversion: str

    def matches(self, source_metric: str) -> bool:
        if "*" in self.pattern:
            return fnmatchcase(source_metric, self.pattern)
        return source_metric == self.pattern


class MappingTable:
    def __init__(self, rules: Iterable[MappingRule]):
        self.rules = tuple(rules)
        for rule in self.rules:
            if rule.conversion not in CONVERSIONS:
                raise ValueError(f"unknown unit conversion {rule.conversion!r}")

    def match(self, tool: str, source_metric: str) -> MappingRule | None:
        """First matching row wins."""
        for rule in self.rules:
            if rule.tool == tool and rule.matches(source_metric):
                return rule
        return None

    def extended(self, extra: Iterable[MappingRule]) -> "MappingTable":
        return MappingTable(self.rules + tuple(extra))

    @classmethod
    def parse(cls, text: str) -> "MappingTable":
        rules = []
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split("|")]
            if len(parts) != 4 or not all(parts):
                raise ValueError(f"mapping line {line_no}: expected 4 fields, got {raw!r}")
            rules.append(MappingRule(*parts))
        return cls(rules)

    @classmethod
    def load(cls, path) -> "MappingTable":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


@lru_cache(maxsize=1)
def default_mapping_table() -> MappingTable:
    text = resources.files("netgraf.data").joinpath("mappings.conf").read_text("utf-8")
    return MappingTable.parse(text)


_NAME_OK = re.compile(r"[a-z_][a-z0-9_]*\Z")
_VALUE_BAD = re.compile(r'[\s{},="]')


def _safe_label_name(name: str) -> str:
    cleaned = re.sub(r"[^a-z0-9_]", "_", name.lower())
    if not cleaned or not _NAME_OK.match(cleaned):
        cleaned = "_" + cleaned
    return cleaned


def _safe_label_value(value: str) -> str:
    cleaned = _VALUE_BAD.sub("_", value)
    return cleaned or "_"


def normalize(
    tool: ToolKind | str,
    node_label: str,
    readings: list[RawReading],
    table: MappingTable | None = None,
    catalog: MetricCatalog | None = None,
) -> list[MetricSample]:
    """Map raw readings onto the canonical catalog.

    Lossy by design: unmapped source metrics, unknown canonical names, and
    readings that cannot form a valid sample are dropped, never raised.
    Callers count drops as len(readings) - len(result).
    """
    tool_name = tool.value if isinstance(tool, ToolKind) else tool
    if table is None:
        table = default_mapping_table()
    if catalog is None:
        catalog = _default_catalog()

    samples: list[MetricSample] = []
    for reading in readings:
        rule = table.match(tool_name, reading.source_metric)
        if rule is None or reading.ts is None:
            continue
        kind = catalog.kind_of(rule.canonical_metric)
        if kind is None:
            continue
        labels = {
            _safe_label_name(k): _safe_label_value(v)
            for k, v in reading.source_labels
            if _safe_label_name(k) not in RESERVED_LABELS
        }
        labels["node"] = _safe_label_value(node_label)
        labels["tool"] = tool_name
        try:
            key = canonical_series_key(rule.canonical_metric, labels.items())
            samples.append(
                MetricSample(
                    key,
                    reading.ts,
                    CONVERSIONS[rule.conversion](reading.value),
                    kind,
                )
            )
        except ModelError:
            continue
    return samples


@lru_cache(maxsize=1)
def _default_catalog() -> MetricCatalog:
    return MetricCatalog()
