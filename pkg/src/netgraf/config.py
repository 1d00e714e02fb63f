"""Daemon configuration: one human-editable YAML file, validated
loudly and completely before anything touches disk or network.

Unknown keys are errors, not warnings: a typo that silently disables a
collector is the worst failure mode a monitoring config can have. The
admin API persists runtime-added collectors to a JSON overlay next to
the data, so plug-ins survive restarts without rewriting the operator's
config file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import yaml

from .adapters import CollectorSpec, default_registry
from .model import BUILTIN_CATALOG
from .pipeline import PipelineConfig
from .store import Aggregator, RetentionPolicy, RetentionRule

MIN_TOKEN_LENGTH = 32
DEFAULT_API_PORT = 8686


class ConfigError(Exception):
    """Invalid configuration; `field` names the offending entry."""

    def __init__(self, field_path: str, message: str):
        self.field = field_path
        super().__init__(f"{field_path}: {message}")


@dataclass(frozen=True)
class ApiConfig:
    port: int = DEFAULT_API_PORT
    host: str = "127.0.0.1"
    cors_origin: str = "*"


@dataclass(frozen=True)
class TokenConfig:
    admin: str
    viewer: str


@dataclass(frozen=True)
class DaemonConfig:
    data_dir: str
    tokens: TokenConfig
    api: ApiConfig = field(default_factory=ApiConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    retention: RetentionPolicy = field(default_factory=RetentionPolicy)
    collectors: tuple[CollectorSpec, ...] = ()


def _require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(mapping: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(
            f"{path}.{unknown[0]}" if path else unknown[0], "unknown key"
        )


def _get_int(mapping: dict, key: str, path: str, default=None, minimum=None):
    if key not in mapping:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {value}")
    return value


def _get_str(mapping: dict, key: str, path: str, default=None):
    if key not in mapping:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required")
        return default
    value = mapping[key]
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{path}.{key}", f"expected a non-empty string, got {value!r}")
    return value


def _parse_tokens(doc: dict) -> TokenConfig:
    block = _require_mapping(doc.get("tokens"), "tokens")
    _reject_unknown(block, {"admin", "viewer"}, "tokens")
    admin = _get_str(block, "admin", "tokens")
    viewer = _get_str(block, "viewer", "tokens")
    for name, token in (("admin", admin), ("viewer", viewer)):
        if len(token) < MIN_TOKEN_LENGTH:
            raise ConfigError(
                f"tokens.{name}", f"must be at least {MIN_TOKEN_LENGTH} characters"
            )
    if admin == viewer:
        raise ConfigError("tokens.viewer", "must differ from the admin token")
    return TokenConfig(admin=admin, viewer=viewer)


def _parse_api(doc: dict) -> ApiConfig:
    if "api" not in doc:
        return ApiConfig()
    block = _require_mapping(doc["api"], "api")
    _reject_unknown(block, {"port", "host", "cors_origin"}, "api")
    port = _get_int(block, "port", "api", default=DEFAULT_API_PORT, minimum=1)
    if port > 65535:
        raise ConfigError("api.port", f"must be <= 65535, got {port}")
    return ApiConfig(
        port=port,
        host=_get_str(block, "host", "api", default="127.0.0.1"),
        cors_origin=_get_str(block, "cors_origin", "api", default="*"),
    )


_CANONICAL_NAMES = frozenset(e.name for e in BUILTIN_CATALOG)


def _parse_pipeline(doc: dict) -> PipelineConfig:
    if "pipeline" not in doc:
        return PipelineConfig()
    block = _require_mapping(doc["pipeline"], "pipeline")
    allowed = {
        "jitter_ms",
        "parallelism",
        "tick_ms",
        "allowlist",
        "out_of_order_windows",
        "default_window_ms",
    }
    _reject_unknown(block, allowed, "pipeline")
    kwargs = {}
    for key, minimum in (
        ("jitter_ms", 0),
        ("parallelism", 1),
        ("tick_ms", 10),
        ("default_window_ms", 0),
    ):
        if key in block:
            kwargs[key] = _get_int(block, key, "pipeline", minimum=minimum)
    if "allowlist" in block:
        names = block["allowlist"]
        if not isinstance(names, list) or not names:
            raise ConfigError("pipeline.allowlist", "expected a non-empty list")
        for i, name in enumerate(names):
            if not isinstance(name, str):
                raise ConfigError(f"pipeline.allowlist[{i}]", "expected a string")
        kwargs["allowlist"] = frozenset(names)
    if "out_of_order_windows" in block:
        windows = _require_mapping(
            block["out_of_order_windows"], "pipeline.out_of_order_windows"
        )
        parsed = {}
        for tool, window in windows.items():
            if tool not in default_registry.tools():
                raise ConfigError(
                    f"pipeline.out_of_order_windows.{tool}", "unknown tool"
                )
            if isinstance(window, bool) or not isinstance(window, int) or window < 0:
                raise ConfigError(
                    f"pipeline.out_of_order_windows.{tool}",
                    f"expected an integer >= 0, got {window!r}",
                )
            parsed[tool] = window
        kwargs["out_of_order_windows"] = parsed
    return PipelineConfig(**kwargs)


def _parse_retention(doc: dict) -> RetentionPolicy:
    if "retention" not in doc:
        return RetentionPolicy()
    block = _require_mapping(doc["retention"], "retention")
    _reject_unknown(block, {"raw_ttl_ms", "downsample"}, "retention")
    raw_ttl = _get_int(
        block, "raw_ttl_ms", "retention", default=RetentionPolicy().raw_ttl_ms, minimum=1
    )
    rules = []
    for i, entry in enumerate(block.get("downsample", []) or []):
        path = f"retention.downsample[{i}]"
        entry = _require_mapping(entry, path)
        _reject_unknown(entry, {"resolution_ms", "aggregator", "ttl_ms"}, path)
        agg_name = _get_str(entry, "aggregator", path, default="AVG").upper()
        try:
            agg = Aggregator[agg_name]
        except KeyError:
            raise ConfigError(f"{path}.aggregator", f"unknown aggregator {agg_name!r}")
        rules.append(
            RetentionRule(
                resolution_ms=_get_int(entry, "resolution_ms", path, minimum=1000),
                aggregator=agg,
                ttl_ms=_get_int(entry, "ttl_ms", path, minimum=1),
            )
        )
    try:
        return RetentionPolicy(raw_ttl_ms=raw_ttl, downsample_rules=tuple(rules))
    except Exception as exc:
        raise ConfigError("retention", str(exc)) from exc


_COLLECTOR_KEYS = {
    "id",
    "tool",
    "host",
    "port",
    "path",
    "interval_ms",
    "timeout_ms",
    "node_label",
    "enabled",
    "credentials",
    "options",
}


def parse_collector(entry, path: str) -> CollectorSpec:
    entry = _require_mapping(entry, path)
    _reject_unknown(entry, _COLLECTOR_KEYS, path)
    tool = _get_str(entry, "tool", path)
    if tool not in default_registry.tools():
        raise ConfigError(f"{path}.tool", f"unknown tool {tool!r}")
    kwargs = {
        "id": _get_str(entry, "id", path),
        "tool": tool,
        "host": _get_str(entry, "host", path),
        "port": _get_int(entry, "port", path, minimum=1),
        "node_label": _get_str(entry, "node_label", path),
        "path": _get_str(entry, "path", path, default=""),
        "interval_ms": _get_int(entry, "interval_ms", path, default=10_000, minimum=1),
        "timeout_ms": _get_int(entry, "timeout_ms", path, default=5_000, minimum=1),
    }
    if "enabled" in entry:
        if not isinstance(entry["enabled"], bool):
            raise ConfigError(f"{path}.enabled", "expected true or false")
        kwargs["enabled"] = entry["enabled"]
    if "credentials" in entry and entry["credentials"] is not None:
        creds = _require_mapping(entry["credentials"], f"{path}.credentials")
        _reject_unknown(creds, {"username", "password"}, f"{path}.credentials")
        kwargs["credentials"] = (
            _get_str(creds, "username", f"{path}.credentials"),
            _get_str(creds, "password", f"{path}.credentials"),
        )
    if "options" in entry and entry["options"] is not None:
        kwargs["options"] = _require_mapping(entry["options"], f"{path}.options")
    try:
        return CollectorSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_config(doc, source: str = "<config>") -> DaemonConfig:
    doc = _require_mapping(doc, source)
    top_keys = {"data_dir", "tokens", "api", "pipeline", "retention", "collectors"}
    _reject_unknown(doc, top_keys, "")
    data_dir = _get_str(doc, "data_dir", "")
    tokens = _parse_tokens(doc)
    collectors = []
    seen_ids = set()
    for i, entry in enumerate(doc.get("collectors", []) or []):
        spec = parse_collector(entry, f"collectors[{i}]")
        if spec.id in seen_ids:
            raise ConfigError(f"collectors[{i}].id", f"duplicate id {spec.id!r}")
        seen_ids.add(spec.id)
        collectors.append(spec)
    return DaemonConfig(
        data_dir=data_dir,
        tokens=tokens,
        api=_parse_api(doc),
        pipeline=_parse_pipeline(doc),
        retention=_parse_retention(doc),
        collectors=tuple(collectors),
    )


def load_config(path: str) -> DaemonConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(path, f"invalid YAML: {exc}") from exc
    return parse_config(doc, source=path)


# ---------------------------------------------------------------------------
# runtime collector overlay (admin-API additions that survive restarts)

OVERLAY_FILENAME = "collectors.overlay.json"


def _overlay_path(data_dir: str) -> str:
    return os.path.join(data_dir, OVERLAY_FILENAME)


def _spec_to_dict(spec: CollectorSpec) -> dict:
    entry = {
        "id": spec.id,
        "tool": spec.tool,
        "host": spec.host,
        "port": spec.port,
        "node_label": spec.node_label,
        "interval_ms": spec.interval_ms,
        "timeout_ms": spec.timeout_ms,
        "enabled": spec.enabled,
    }
    if spec.path:
        entry["path"] = spec.path
    if spec.credentials:
        entry["credentials"] = {
            "username": spec.credentials[0],
            "password": spec.credentials[1],
        }
    if spec.options:
        entry["options"] = dict(spec.options)
    return entry


def load_overlay(data_dir: str) -> tuple[list[CollectorSpec], set]:
    """Returns (added collectors, disabled collector ids)."""
    path = _overlay_path(data_dir)
    if not os.path.exists(path):
        return [], set()
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    added = [
        parse_collector(entry, f"{OVERLAY_FILENAME}[{i}]")
        for i, entry in enumerate(doc.get("collectors", []))
    ]
    return added, set(doc.get("disabled", []))


def _write_overlay(data_dir: str, added: list[CollectorSpec], disabled: set) -> None:
    path = _overlay_path(data_dir)
    doc = {
        "collectors": [_spec_to_dict(s) for s in added],
        "disabled": sorted(disabled),
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
    os.replace(tmp, path)


def overlay_add(data_dir: str, spec: CollectorSpec) -> None:
    added, disabled = load_overlay(data_dir)
    added = [s for s in added if s.id != spec.id] + [spec]
    disabled.discard(spec.id)
    _write_overlay(data_dir, added, disabled)


def overlay_disable(data_dir: str, spec_id: str) -> None:
    added, disabled = load_overlay(data_dir)
    remaining = [s for s in added if s.id != spec_id]
    if len(remaining) == len(added):
        disabled.add(spec_id)  # config-borne collector: mask it
    _write_overlay(data_dir, remaining, disabled)


def effective_collectors(config: DaemonConfig) -> list[CollectorSpec]:
    """Config collectors merged with the runtime overlay."""
    added, disabled = load_overlay(config.data_dir)
    merged = [c for c in config.collectors if c.id not in disabled]
    merged_ids = {c.id for c in merged}
    for spec in added:
        if spec.id not in disabled and spec.id not in merged_ids:
            merged.append(spec)
    return merged


# ---------------------------------------------------------------------------
# config generation


_CHAMELEON_TEMPLATE = """\
# netgraf daemon configuration: five-node core network layout.
# Tool endpoints and listening ports follow the standard placement:
# interface and per-second collectors on every node, one Prometheus
# scrape target, one Zabbix server, one perfSONAR measurement archive.
data_dir: /var/lib/netgraf

api:
  port: 8686
  host: 0.0.0.0
  cors_origin: "*"

# Replace both tokens before deploying; 32 characters minimum.
tokens:
  admin: CHANGE-ME-admin-0000000000000000000000
  viewer: CHANGE-ME-viewer-000000000000000000000

pipeline:
  jitter_ms: 500
  parallelism: 8
  allowlist:
    - throughput_bytes_per_second
    - packet_loss_ratio
    - tcp_retransmits_total
  out_of_order_windows:
    perfsonar: 60000

retention:
  raw_ttl_ms: 604800000          # raw points: 7 days
  downsample:
    - resolution_ms: 60000       # 1-minute rollups for 30 days
      aggregator: AVG
      ttl_ms: 2592000000

collectors:
{collectors}"""

_CHAMELEON_HOSTS = {
    "node1": "192.168.100.11",
    "node2": "192.168.100.12",
    "node3": "192.168.100.13",
    "node4": "192.168.100.14",
    "node5": "192.168.100.16",
}


class UnknownTemplate(Exception):
    pass


def _chameleon_collectors() -> str:
    lines = []

    def block(node: str, tool: str, port: int, extra: list | None = None):
        host = _CHAMELEON_HOSTS[node]
        lines.append(f"  - id: {node}-{tool}")
        lines.append(f"    tool: {tool}")
        lines.append(f"    host: {host}")
        lines.append(f"    port: {port}")
        lines.append(f"    node_label: {node}")
        lines.append("    interval_ms: 10000")
        lines.append("    timeout_ms: 5000")
        for line in extra or []:
            lines.append(f"    {line}")

    for i in range(1, 6):
        node = f"node{i}"
        block(node, "ntopng", 3000)
        block(node, "netdata", 19999)
        if i == 1:
            block(node, "prometheus", 9090)
        if i == 3:
            block(
                node,
                "zabbix",
                10050,
                extra=[
                    "credentials:",
                    "  username: netgraf",
                    "  password: CHANGE-ME",
                    "options:",
                    "  items:",
                    "    - net.throughput.bytes",
                    "    - tcp.retransmits",
                ],
            )
        if i == 5:
            block(node, "perfsonar", 861)
    return "\n".join(lines) + "\n"


def generate_config(template: str) -> str:
    """Deterministic config text for a named template."""
    if template != "chameleon":
        raise UnknownTemplate(template)
    return _CHAMELEON_TEMPLATE.format(collectors=_chameleon_collectors())
