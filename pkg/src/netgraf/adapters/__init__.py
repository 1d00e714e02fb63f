"""Tool adapters: one per dialect, plus the registry and normalization."""

from ..model import ToolKind
from .base import (
    Adapter,
    AdapterRegistry,
    CollectorSpec,
    FetchWindow,
    RawReading,
    adapter_for,
    default_registry,
    register_adapter,
)
from .errors import (
    AdapterError,
    AuthExpired,
    AuthFailed,
    DuplicateTool,
    HttpStatus,
    MalformedResponse,
    ParseError,
    Timeout,
    ToolError,
    UnknownTool,
    Unreachable,
)
from .netdata import NetdataAdapter, fetch_netdata
from .normalize import (
    CONVERSIONS,
    MappingRule,
    MappingTable,
    default_mapping_table,
    normalize,
)
from .ntopng import NtopngAdapter, fetch_ntopng
from .perfsonar import PerfsonarAdapter, fetch_perfsonar
from .prometheus import (
    PrometheusAdapter,
    fetch_prometheus,
    parse_prometheus_exposition,
)
from .zabbix import ZabbixAdapter, zabbix_fetch_history, zabbix_login

for _tool, _adapter in (
    (ToolKind.PROMETHEUS, PrometheusAdapter()),
    (ToolKind.NETDATA, NetdataAdapter()),
    (ToolKind.NTOPNG, NtopngAdapter()),
    (ToolKind.PERFSONAR, PerfsonarAdapter()),
    (ToolKind.ZABBIX, ZabbixAdapter()),
):
    default_registry.register(_tool.value, _adapter)

__all__ = [
    "Adapter",
    "AdapterError",
    "AdapterRegistry",
    "AuthExpired",
    "AuthFailed",
    "CONVERSIONS",
    "CollectorSpec",
    "DuplicateTool",
    "FetchWindow",
    "HttpStatus",
    "MalformedResponse",
    "MappingRule",
    "MappingTable",
    "NetdataAdapter",
    "NtopngAdapter",
    "ParseError",
    "PerfsonarAdapter",
    "PrometheusAdapter",
    "RawReading",
    "Timeout",
    "ToolError",
    "UnknownTool",
    "Unreachable",
    "ZabbixAdapter",
    "adapter_for",
    "default_mapping_table",
    "default_registry",
    "fetch_netdata",
    "fetch_ntopng",
    "fetch_perfsonar",
    "fetch_prometheus",
    "normalize",
    "parse_prometheus_exposition",
    "register_adapter",
    "zabbix_fetch_history",
    "zabbix_login",
]
