"""Exposition-text scraping: `name{labels} value [timestamp_ms]` lines.

Comment lines (`# HELP`, `# TYPE`, anything after `#`) are skipped. Label
values are double-quoted with `\\`, `\"` and `\n` escapes; an unknown
escape keeps the escaped character. A parse error on any line aborts the
whole scrape so a torn response cannot half-poison the store.
"""

from __future__ import annotations

import math
import re
import time

from .base import CollectorSpec, FetchWindow, RawReading, http_get
from .errors import ParseError

DEFAULT_PORT = 9090
DEFAULT_PATH = "/metrics"

_SAMPLE_RE = re.compile(
    r"([a-zA-Z_:][a-zA-Z0-9_:]*)"  # metric name
    r"(?:\{(.*)\})?"               # optional label section (greedy to last })
    r"\s+(\S+)"                    # value token
    r"(?:\s+(-?\d+))?"             # optional timestamp, integer milliseconds
    r"\s*\Z"
)
_LABEL_RE = re.compile(r'\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*=\s*"((?:[^"\\]|\\.)*)"\s*(,?)\s*')
_ESCAPES = {"\\": "\\", '"': '"', "n": "\n"}


def _unescape(raw: str) -> str:
    return re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), raw)


def _parse_labels(section: str, line_no: int) -> tuple[tuple[str, str], ...]:
    if not section.strip():
        return ()
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    pos = 0
    while pos < len(section):
        m = _LABEL_RE.match(section, pos)
        if not m:
            raise ParseError(line_no, f"bad label section near {section[pos:pos + 20]!r}")
        name, raw_value, comma = m.group(1), m.group(2), m.group(3)
        if name in seen:
            raise ParseError(line_no, f"duplicate label {name!r}")
        seen.add(name)
        pairs.append((name, _unescape(raw_value)))
        pos = m.end()
        if pos < len(section) and not comma:
            raise ParseError(line_no, "missing comma between labels")
    return tuple(pairs)


def parse_prometheus_exposition(body: str, scrape_ts: int) -> list[RawReading]:
    """One RawReading per sample line; `scrape_ts` fills in missing
    per-line timestamps.
    """
    readings: list[RawReading] = []
    for line_no, raw_line in enumerate(body.split("\n"), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        m = _SAMPLE_RE.match(line)
        if not m:
            raise ParseError(line_no, f"unparseable sample line {line[:40]!r}")
        name, label_section, value_token, ts_token = m.groups()
        labels = _parse_labels(label_section, line_no) if label_section else ()
        try:
            value = float(value_token)
        except ValueError:
            raise ParseError(line_no, f"bad value {value_token!r}") from None
        if not math.isfinite(value):
            raise ParseError(line_no, f"non-finite value {value_token!r}")
        ts = int(ts_token) if ts_token is not None else scrape_ts
        readings.append(
            RawReading(source_metric=name, value=value, ts=ts, source_labels=labels)
        )
    return readings


def fetch_prometheus(spec: CollectorSpec, scrape_ts: int | None = None) -> list[RawReading]:
    if scrape_ts is None:
        scrape_ts = int(time.time() * 1000)
    path = spec.path or DEFAULT_PATH
    resp = http_get(spec, path)
    return parse_prometheus_exposition(resp.text, scrape_ts)


class PrometheusAdapter:
    default_port = DEFAULT_PORT
    extra_mappings: tuple = ()

    def fetch(self, spec: CollectorSpec, window: FetchWindow) -> list[RawReading]:
        return fetch_prometheus(spec, scrape_ts=window.t1_ms)
