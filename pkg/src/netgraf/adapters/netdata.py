"""netdata chart polling via /api/v1/data.

Each configured chart yields one reading per (row, dimension), named
`chart.dimension`. netdata's network interface charts report kilobits/s;
other charts default to a unitless reading unless configured otherwise
in the collector's `chart_units` option.
"""

from __future__ import annotations

import math

from .base import CollectorSpec, FetchWindow, RawReading, http_get
from .errors import MalformedResponse

DEFAULT_PORT = 19999
DEFAULT_PATH = "/api/v1/data"

DEFAULT_CHART_UNITS = {"net.": "kilobits/s"}


def _chart_unit(chart: str, chart_units: dict) -> str:
    if chart in chart_units:
        return chart_units[chart]
    for prefix, unit in DEFAULT_CHART_UNITS.items():
        if chart.startswith(prefix):
            return unit
    return ""


def fetch_netdata(
    spec: CollectorSpec, charts: list[str], after_s: int, before_s: int
) -> list[RawReading]:
    """Rows for whole seconds in (after_s, before_s], absolute epoch
    seconds. Absolute windows keep repeated fetches contiguous no matter
    how the server's clock relates to ours; the relative `after=-N` form
    anchors on the server's now and can skip or repeat seconds.
    """
    if before_s <= after_s:
        raise ValueError("before_s must be > after_s")
    chart_units = spec.options.get("chart_units", {})
    readings: list[RawReading] = []
    for chart in charts:
        resp = http_get(
            spec,
            spec.path or DEFAULT_PATH,
            params={
                "chart": chart,
                "after": str(after_s),
                "before": str(before_s),
                "format": "json",
            },
        )
        try:
            doc = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"{spec.id}: chart {chart}: not JSON") from exc
        if not isinstance(doc, dict) or "labels" not in doc or "data" not in doc:
            raise MalformedResponse(f"{spec.id}: chart {chart}: missing labels/data")
        labels = doc["labels"]
        if not isinstance(labels, list) or not labels or labels[0] != "time":
            raise MalformedResponse(f"{spec.id}: chart {chart}: bad labels row")
        dimensions = labels[1:]
        unit = _chart_unit(chart, chart_units)
        rows = doc["data"]
        if not isinstance(rows, list):
            raise MalformedResponse(f"{spec.id}: chart {chart}: data is not a list")
        for row in rows:
            if not isinstance(row, list) or len(row) != len(labels):
                raise MalformedResponse(f"{spec.id}: chart {chart}: ragged data row")
            ts_s, values = row[0], row[1:]
            if not isinstance(ts_s, (int, float)):
                raise MalformedResponse(f"{spec.id}: chart {chart}: bad row time")
            for dim, value in zip(dimensions, values):
                if value is None:
                    continue  # netdata marks collection gaps with nulls
                if not isinstance(value, (int, float)) or not math.isfinite(value):
                    raise MalformedResponse(
                        f"{spec.id}: chart {chart}: bad value for {dim}"
                    )
                readings.append(
                    RawReading(
                        source_metric=f"{chart}.{dim}",
                        value=float(value),
                        ts=int(ts_s * 1000),
                        source_unit=unit,
                    )
                )
    return readings


class NetdataAdapter:
    default_port = DEFAULT_PORT
    extra_mappings: tuple = ()

    def fetch(self, spec: CollectorSpec, window: FetchWindow) -> list[RawReading]:
        charts = spec.options.get("charts", ["net.eth0"])
        # whole seconds s with t0 <= s*1000 < t1, as an (after, before] pair
        after_s = (window.t0_ms + 999) // 1000 - 1
        before_s = (window.t1_ms - 1) // 1000
        if before_s <= after_s:
            return []  # window holds no whole second yet
        return fetch_netdata(spec, charts, after_s, before_s)
