"""ntopng interface statistics via the REST endpoint.

One GET per scrape returns the interface's instantaneous counters wrapped
in {"rsp": {...}, "rc": 0}; a non-zero rc is the tool reporting its own
failure and fails the scrape.
"""

from __future__ import annotations

import math

from .base import CollectorSpec, FetchWindow, RawReading, http_get
from .errors import MalformedResponse, ToolError

DEFAULT_PORT = 3000
DEFAULT_PATH = "/lua/rest/v2/get/interface/data.lua"

# stat field -> unit of the emitted reading
RECOGNIZED_STATS = {
    "throughput_bps": "bits/s",
    "drops": "packets",
    "packets": "packets",
}


def fetch_ntopng(spec: CollectorSpec, interface_id: str) -> list[RawReading]:
    resp = http_get(spec, spec.path or DEFAULT_PATH, params={"ifid": interface_id})
    try:
        doc = resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"{spec.id}: not JSON") from exc
    if not isinstance(doc, dict) or "rc" not in doc:
        raise MalformedResponse(f"{spec.id}: missing rc")
    rc = doc["rc"]
    if rc != 0:
        raise ToolError(rc)
    rsp = doc.get("rsp")
    if not isinstance(rsp, dict):
        raise MalformedResponse(f"{spec.id}: missing rsp object")
    readings: list[RawReading] = []
    for stat, unit in RECOGNIZED_STATS.items():
        if stat not in rsp:
            continue
        value = rsp[stat]
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise MalformedResponse(f"{spec.id}: bad {stat} value")
        readings.append(
            RawReading(
                source_metric=f"interface.{stat}",
                value=float(value),
                source_unit=unit,
            )
        )
    return readings


class NtopngAdapter:
    default_port = DEFAULT_PORT
    extra_mappings: tuple = ()

    def fetch(self, spec: CollectorSpec, window: FetchWindow) -> list[RawReading]:
        interface_id = str(spec.options.get("interface_id", "0"))
        readings = fetch_ntopng(spec, interface_id)
        # instantaneous stats carry no tool timestamp; stamp the scrape time
        return [
            RawReading(
                source_metric=r.source_metric,
                value=r.value,
                ts=window.t1_ms,
                source_labels=r.source_labels,
                source_unit=r.source_unit,
            )
            for r in readings
        ]
