"""perfSONAR measurement-archive reads.

The archive's HTTP face serves one flat JSON array of {"ts": seconds,
"val": number} per event type. Two event types feed the canonical
catalog: throughput (bits/s) and packet-loss-rate (a 0..1 ratio).
"""

from __future__ import annotations

import math

from .base import CollectorSpec, FetchWindow, RawReading, http_get
from .errors import MalformedResponse

DEFAULT_PORT = 861
DEFAULT_PATH = "/archive"

EVENT_TYPES = ("throughput", "packet-loss-rate")
_EVENT_UNITS = {"throughput": "bits/s", "packet-loss-rate": "ratio"}


def fetch_perfsonar(
    spec: CollectorSpec, event_type: str, t0: int, t1: int
) -> list[RawReading]:
    if event_type not in EVENT_TYPES:
        raise ValueError(f"unsupported event type {event_type!r}")
    if t0 >= t1:
        raise ValueError("t0 must be < t1")
    base = spec.path or DEFAULT_PATH
    resp = http_get(
        spec,
        f"{base}/{event_type}",
        params={"time-start": str(t0 // 1000), "time-end": str(t1 // 1000)},
    )
    try:
        doc = resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"{spec.id}: not JSON") from exc
    if not isinstance(doc, list):
        raise MalformedResponse(f"{spec.id}: archive response is not an array")
    readings: list[RawReading] = []
    for element in doc:
        if not isinstance(element, dict) or "ts" not in element or "val" not in element:
            raise MalformedResponse(f"{spec.id}: element missing ts/val")
        ts, val = element["ts"], element["val"]
        if not isinstance(ts, (int, float)) or not isinstance(val, (int, float)):
            raise MalformedResponse(f"{spec.id}: non-numeric ts/val")
        if not math.isfinite(val):
            raise MalformedResponse(f"{spec.id}: non-finite val")
        readings.append(
            RawReading(
                source_metric=event_type,
                value=float(val),
                ts=int(ts * 1000),
                source_unit=_EVENT_UNITS[event_type],
            )
        )
    return readings


class PerfsonarAdapter:
    default_port = DEFAULT_PORT
    extra_mappings: tuple = ()

    def fetch(self, spec: CollectorSpec, window: FetchWindow) -> list[RawReading]:
        event_types = spec.options.get("event_types", list(EVENT_TYPES))
        readings: list[RawReading] = []
        for event_type in event_types:
            readings.extend(
                fetch_perfsonar(spec, event_type, window.t0_ms, window.t1_ms)
            )
        return readings
