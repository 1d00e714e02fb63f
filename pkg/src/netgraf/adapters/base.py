"""Shared adapter plumbing: collector specs, raw readings, the HTTP client
conventions every dialect uses, and the tool registry that makes new
collectors pluggable at runtime.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Protocol

import requests

from ..model import ToolKind
from .errors import DuplicateTool, HttpStatus, Timeout, UnknownTool, Unreachable


@dataclass(frozen=True)
class CollectorSpec:
    """One scrape target: a tool endpoint on a node.

    `options` carries per-dialect fetch parameters (netdata chart list,
    ntopng interface id, perfSONAR event types, Zabbix item keys).
    """

    id: str
    tool: str
    host: str
    port: int
    path: str = ""
    interval_ms: int = 10_000
    timeout_ms: int = 5_000
    credentials: tuple[str, str] | None = None
    node_label: str = ""
    enabled: bool = True
    options: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("collector id must be non-empty")
        if not 1 <= self.port <= 65535:
            raise ValueError(f"collector {self.id}: port {self.port} out of range")
        if self.interval_ms <= 0:
            raise ValueError(f"collector {self.id}: interval_ms must be > 0")
        if self.timeout_ms <= 0:
            raise ValueError(f"collector {self.id}: timeout_ms must be > 0")
        if self.timeout_ms >= self.interval_ms:
            raise ValueError(
                f"collector {self.id}: timeout_ms must be < interval_ms"
            )
        if not self.node_label:
            raise ValueError(f"collector {self.id}: node_label must be non-empty")


@dataclass(frozen=True)
class RawReading:
    """A pre-normalization sample in the tool's own vocabulary."""

    source_metric: str
    value: float
    ts: int | None = None  # milliseconds, or None when the tool gave none
    source_labels: tuple[tuple[str, str], ...] = ()
    source_unit: str = ""

    def __post_init__(self) -> None:
        if not self.source_metric:
            raise ValueError("source_metric must be non-empty")
        if not math.isfinite(self.value):
            raise ValueError(f"reading value must be finite, got {self.value}")


@dataclass(frozen=True)
class FetchWindow:
    """The time span a scrape covers: (previous scrape, this scrape]."""

    t0_ms: int
    t1_ms: int


class Adapter(Protocol):
    default_port: int
    # extra mapping rows a plug-in tool ships with (see normalize module)
    extra_mappings: tuple

    def fetch(self, spec: CollectorSpec, window: FetchWindow) -> list[RawReading]:
        ...


# -- HTTP conventions --------------------------------------------------------
# Per-spec timeout, no redirects. Credentials travel only in the Zabbix
# login body, never as HTTP auth headers.


def http_get(spec: CollectorSpec, path: str, params: dict | None = None) -> requests.Response:
    url = f"http://{spec.host}:{spec.port}{path}"
    try:
        resp = requests.get(
            url,
            params=params,
            timeout=spec.timeout_ms / 1000.0,
            allow_redirects=False,
        )
    except requests.exceptions.Timeout as exc:
        raise Timeout(f"{spec.id}: {url} timed out") from exc
    except requests.exceptions.ConnectionError as exc:
        raise Unreachable(f"{spec.id}: {url} unreachable") from exc
    if resp.status_code != 200:
        raise HttpStatus(resp.status_code)
    return resp


def http_post_json(spec: CollectorSpec, path: str, body: dict) -> requests.Response:
    url = f"http://{spec.host}:{spec.port}{path}"
    try:
        resp = requests.post(
            url,
            json=body,
            timeout=spec.timeout_ms / 1000.0,
            allow_redirects=False,
        )
    except requests.exceptions.Timeout as exc:
        raise Timeout(f"{spec.id}: {url} timed out") from exc
    except requests.exceptions.ConnectionError as exc:
        raise Unreachable(f"{spec.id}: {url} unreachable") from exc
    if resp.status_code != 200:
        raise HttpStatus(resp.status_code)
    return resp


# -- registry ----------------------------------------------------------------


class AdapterRegistry:
    """Tool name -> adapter. Read-mostly; writes only at startup or via the
    runtime plug-in path.
    """

    def __init__(self) -> None:
        self._adapters: dict[str, Adapter] = {}
        self._lock = threading.Lock()

    def register(self, tool_name: str, adapter: Adapter) -> None:
        with self._lock:
            if tool_name in self._adapters:
                raise DuplicateTool(f"tool {tool_name!r} already registered")
            self._adapters[tool_name] = adapter

    def get(self, tool_name: str) -> Adapter:
        with self._lock:
            try:
                return self._adapters[tool_name]
            except KeyError:
                raise UnknownTool(f"no adapter for tool {tool_name!r}") from None

    def __contains__(self, tool_name: str) -> bool:
        with self._lock:
            return tool_name in self._adapters

    def tools(self) -> list[str]:
        with self._lock:
            return sorted(self._adapters)

    def default_port(self, tool_name: str) -> int:
        return self.get(tool_name).default_port


default_registry = AdapterRegistry()


def register_adapter(tool_name: str, adapter: Adapter) -> None:
    """Make a new tool's collectors usable by specs and the pipeline."""
    default_registry.register(tool_name, adapter)


def adapter_for(tool: str | ToolKind) -> Adapter:
    name = tool.value if isinstance(tool, ToolKind) else tool
    return default_registry.get(name)
