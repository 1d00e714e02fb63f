"""Desk-scale testbed emulator.

Serves protocol-faithful synthetic versions of every supported tool so a
multi-node deployment can be exercised on one machine: each emulated
node runs real HTTP endpoints speaking the tools' wire dialects, backed
by a deterministic traffic synthesizer. Fault windows make endpoints
refuse connections, stall past client timeouts, or emit garbage, which
is how ingest robustness and NULL-bucket rendering get tested end to
end.

All values are pure functions of (profile seed, simulated time), so two
runs with the same topology and clock produce byte-identical bodies.
"""

from __future__ import annotations

import hashlib
import json
import math
import socket
import threading
import time
from dataclasses import dataclass
from enum import Enum
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable
from urllib.parse import parse_qs, urlparse

from .clock import Clock, SystemClock
from .model import ToolKind
from .store.crc32c import crc32c


class EmulatorError(Exception):
    pass


class UnknownMetric(EmulatorError):
    pass


class PortInUse(EmulatorError):
    pass


class TopologyError(EmulatorError):
    pass


class FaultKind(Enum):
    DOWN = "down"
    SLOW = "slow"
    GARBAGE = "garbage"


@dataclass(frozen=True)
class FaultWindow:
    """[start_ms, end_ms) relative to the topology epoch."""

    start_ms: int
    end_ms: int
    kind: FaultKind

    def __post_init__(self) -> None:
        if self.start_ms < 0 or self.end_ms <= self.start_ms:
            raise TopologyError(
                f"fault window [{self.start_ms}, {self.end_ms}) is empty or negative"
            )

    def contains(self, rel_ms: int) -> bool:
        return self.start_ms <= rel_ms < self.end_ms


@dataclass(frozen=True)
class TrafficProfile:
    """Shape of one node's synthetic traffic.

    Throughput rides a sine wave over `period_s` with a small seeded
    noise band; loss hovers around `loss_base`; retransmits tick up as a
    seeded arrival process at roughly `retransmit_rate` events/s.
    """

    throughput_base: float
    throughput_amplitude: float = 0.0
    period_s: float = 600.0
    loss_base: float = 0.01
    retransmit_rate: float = 0.5
    seed: int = 0
    noise_ratio: float = 0.02

    def __post_init__(self) -> None:
        if not (self.throughput_base >= self.throughput_amplitude >= 0.0):
            raise TopologyError("need throughput_base >= throughput_amplitude >= 0")
        if not (0.0 <= self.loss_base <= 1.0):
            raise TopologyError("loss_base must be within [0, 1]")
        if self.period_s <= 0:
            raise TopologyError("period_s must be positive")
        if self.retransmit_rate < 0:
            raise TopologyError("retransmit_rate must be >= 0")
        if not (0.0 <= self.noise_ratio < 1.0):
            raise TopologyError("noise_ratio must be within [0, 1)")


def _unit_noise(seed: int, tag: str, n: int) -> float:
    """Deterministic uniform [0, 1) draw, stable across processes."""
    return crc32c(f"{seed}|{tag}|{n}".encode()) / 2**32


def _arrival_time_ms(seed: int, rate_per_s: float, n: int) -> float:
    # n-th event lands near n/rate with +-25% seeded jitter; strictly
    # increasing in n because consecutive jitters differ by < one slot
    period_ms = 1000.0 / rate_per_s
    return (n + 0.25 + 0.5 * _unit_noise(seed, "arrival", n)) * period_ms


def _arrival_count(seed: int, rate_per_s: float, t_ms: int) -> int:
    if rate_per_s <= 0 or t_ms <= 0:
        return 0
    hi = int(t_ms * rate_per_s / 1000.0) + 2
    while _arrival_time_ms(seed, rate_per_s, hi) <= t_ms:
        hi *= 2
    lo = 0
    while lo < hi:
        mid = (lo + hi) // 2
        if _arrival_time_ms(seed, rate_per_s, mid) <= t_ms:
            lo = mid + 1
        else:
            hi = mid
    return lo


def synth_value(profile: TrafficProfile, metric: str, t_ms: int) -> float:
    """Instantaneous value of a canonical metric at simulated time t_ms.

    Pure in (profile, metric, t_ms): no hidden state, no wall clock.
    """
    if metric == "throughput_bytes_per_second":
        phase = 2.0 * math.pi * (t_ms / 1000.0) / profile.period_s
        wave = profile.throughput_base + profile.throughput_amplitude * math.sin(phase)
        noise_unit = 2.0 * _unit_noise(profile.seed, metric, t_ms) - 1.0
        return wave + noise_unit * profile.noise_ratio * profile.throughput_base
    if metric == "packet_loss_ratio":
        noise_unit = 2.0 * _unit_noise(profile.seed, metric, t_ms) - 1.0
        value = profile.loss_base + noise_unit * profile.noise_ratio * profile.loss_base
        return min(1.0, max(0.0, value))
    if metric == "tcp_retransmits_total":
        return float(_arrival_count(profile.seed, profile.retransmit_rate, t_ms))
    raise UnknownMetric(metric)


@dataclass(frozen=True)
class EmulatedNode:
    """One synthetic host: which tools it runs (and on which ports),
    its traffic shape, and when it misbehaves. Port 0 binds ephemerally.
    """

    node_id: str
    tools: tuple[tuple[ToolKind, int], ...]
    profile: TrafficProfile
    fault_schedule: tuple[FaultWindow, ...] = ()

    def __post_init__(self) -> None:
        if not self.node_id:
            raise TopologyError("node_id must be non-empty")
        if not self.tools:
            raise TopologyError(f"{self.node_id}: needs at least one tool")
        seen = set()
        for tool, port in self.tools:
            if not isinstance(tool, ToolKind):
                raise TopologyError(f"{self.node_id}: {tool!r} is not a known tool")
            if tool in seen:
                raise TopologyError(f"{self.node_id}: duplicate tool {tool.value}")
            seen.add(tool)
            if not (0 <= port <= 65535):
                raise TopologyError(f"{self.node_id}: port {port} out of range")
        windows = sorted(self.fault_schedule, key=lambda w: w.start_ms)
        for prev, cur in zip(windows, windows[1:]):
            if cur.start_ms < prev.end_ms:
                raise TopologyError(
                    f"{self.node_id}: fault windows overlap at {cur.start_ms}"
                )

    def fault_at(self, rel_ms: int) -> FaultKind | None:
        for window in self.fault_schedule:
            if window.contains(rel_ms):
                return window.kind
        return None


@dataclass(frozen=True)
class Topology:
    """A full emulated deployment, anchored at an absolute epoch so that
    fault offsets and synthesized values line up across runs.
    """

    nodes: tuple[EmulatedNode, ...]
    epoch_ms: int
    netdata_cadence_s: int = 1
    zabbix_cadence_s: int = 5
    perfsonar_cadence_s: int = 60
    slow_delay_s: float = 6.0

    def __post_init__(self) -> None:
        if not self.nodes:
            raise TopologyError("topology needs at least one node")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate node ids in topology")
        for cadence in (
            self.netdata_cadence_s,
            self.zabbix_cadence_s,
            self.perfsonar_cadence_s,
        ):
            if cadence < 1:
                raise TopologyError("cadences must be >= 1 second")

    def node(self, node_id: str) -> EmulatedNode:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise TopologyError(f"no node {node_id!r} in topology")


# canonical ports the tools listen on in a real deployment
DEFAULT_TOOL_PORTS = {
    ToolKind.PROMETHEUS: 9090,
    ToolKind.NTOPNG: 3000,
    ToolKind.NETDATA: 19999,
    ToolKind.ZABBIX: 10050,
    ToolKind.PERFSONAR: 861,
}

ZABBIX_USER = "netgraf"
ZABBIX_PASSWORD = "emulator"
ZABBIX_ITEMS = ("net.throughput.bytes", "tcp.retransmits")
NETDATA_CHART = "net.eth0"
PERFSONAR_EVENTS = ("throughput", "packet-loss-rate")

PROMETHEUS_DECOYS = (
    "node_disk_free_bytes",
    "node_memory_active_bytes",
    "node_cpu_seconds_total",
    "node_load1",
)


def default_topology(
    epoch_ms: int, seed: int = 1337, ephemeral_ports: bool = True
) -> Topology:
    """Five nodes: flow and interface tools everywhere, plus one
    Prometheus endpoint (node1), one Zabbix server (node3), and one
    measurement archive (node5).

    With ephemeral_ports every endpoint binds port 0, which is the only
    workable layout when all five "hosts" share one loopback interface.
    """
    nodes = []
    for i in range(1, 6):
        tools: list[tuple[ToolKind, int]] = [
            (ToolKind.NTOPNG, 0 if ephemeral_ports else DEFAULT_TOOL_PORTS[ToolKind.NTOPNG]),
            (ToolKind.NETDATA, 0 if ephemeral_ports else DEFAULT_TOOL_PORTS[ToolKind.NETDATA]),
        ]
        if i == 1:
            tools.append(
                (ToolKind.PROMETHEUS, 0 if ephemeral_ports else DEFAULT_TOOL_PORTS[ToolKind.PROMETHEUS])
            )
        if i == 3:
            tools.append(
                (ToolKind.ZABBIX, 0 if ephemeral_ports else DEFAULT_TOOL_PORTS[ToolKind.ZABBIX])
            )
        if i == 5:
            tools.append(
                (ToolKind.PERFSONAR, 0 if ephemeral_ports else DEFAULT_TOOL_PORTS[ToolKind.PERFSONAR])
            )
        profile = TrafficProfile(
            throughput_base=1.0e8 + 1.5e7 * i,
            throughput_amplitude=2.5e7,
            period_s=900.0,
            loss_base=0.002 * i,
            retransmit_rate=0.4 + 0.3 * i,
            seed=seed + i,
        )
        nodes.append(
            EmulatedNode(node_id=f"node{i}", tools=tuple(tools), profile=profile)
        )
    return Topology(nodes=tuple(nodes), epoch_ms=epoch_ms)


# ---------------------------------------------------------------------------
# wire-format renderers (pure; the HTTP layer only serializes their output)


def _second_is_down(node: EmulatedNode, epoch_ms: int, second: int) -> bool:
    # a host that is DOWN collects nothing, so its history has holes;
    # SLOW and GARBAGE are tool-front failures and leave history intact
    rel = second * 1000 - epoch_ms
    for window in node.fault_schedule:
        if window.kind is FaultKind.DOWN and window.contains(rel):
            return True
    return False


def render_prometheus(node: EmulatedNode, t_ms: int) -> str:
    """Exposition body: the retransmit counter plus host-health gauges
    that have no place in a network-metric catalog.
    """
    seed = node.profile.seed
    retrans = int(synth_value(node.profile, "tcp_retransmits_total", t_ms))
    disk = 4.0e10 * (0.6 + 0.3 * _unit_noise(seed, "disk", t_ms))
    memory = 8.0e9 * (0.5 + 0.2 * _unit_noise(seed, "memory", t_ms))
    cpu = 0.3 * (t_ms / 1000.0)
    load1 = 0.5 + _unit_noise(seed, "load1", t_ms)
    lines = [
        "# TYPE node_tcp_retransmits_total counter",
        f'node_tcp_retransmits_total{{device="eth0"}} {retrans}',
        "# TYPE node_disk_free_bytes gauge",
        f"node_disk_free_bytes {disk!r}",
        "# TYPE node_memory_active_bytes gauge",
        f"node_memory_active_bytes {memory!r}",
        "# TYPE node_cpu_seconds_total counter",
        f"node_cpu_seconds_total {cpu!r}",
        "# TYPE node_load1 gauge",
        f"node_load1 {load1!r}",
    ]
    return "\n".join(lines) + "\n"


def render_netdata(
    node: EmulatedNode,
    epoch_ms: int,
    chart: str,
    after_s: int,
    now_ms: int,
    cadence_s: int = 1,
    before_s: int | None = None,
) -> dict:
    """History rows, newest first, kilobits/s. Both window forms of the
    real API: a negative `after_s` is relative (rows for (now+after,
    now]), a non-negative one is an absolute epoch second paired with
    `before_s` for rows in (after_s, before_s], clipped to now.

    Seconds during DOWN windows are absent entirely, which is how the
    real collector behaves after an outage: the gap stays a gap.
    """
    now_s = now_ms // 1000
    if after_s < 0:
        start_exclusive = now_s + after_s
        end_inclusive = now_s
    else:
        start_exclusive = after_s
        end_inclusive = min(before_s if before_s is not None else now_s, now_s)
    rows = []
    for second in range(end_inclusive, start_exclusive, -1):
        if second < epoch_ms // 1000:
            break
        if second % cadence_s != 0:
            continue
        if _second_is_down(node, epoch_ms, second):
            continue
        received_bytes = synth_value(
            node.profile, "throughput_bytes_per_second", second * 1000
        )
        received_kbps = received_bytes / 125.0
        sent_kbps = received_kbps * 0.35
        rows.append([second, received_kbps, sent_kbps])
    return {
        "labels": ["time", "received", "sent"],
        "data": rows,
        "view_update_every": cadence_s,
    }


def render_ntopng(node: EmulatedNode, now_ms: int) -> dict:
    """Instantaneous interface stats wrapped in the rc/rsp envelope."""
    bytes_per_s = synth_value(node.profile, "throughput_bytes_per_second", now_ms)
    loss = synth_value(node.profile, "packet_loss_ratio", now_ms)
    packets = int(bytes_per_s / 1500.0)
    return {
        "rc": 0,
        "rsp": {
            "throughput_bps": bytes_per_s * 8.0,
            "packets": packets,
            "drops": int(packets * loss),
        },
    }


def render_perfsonar(
    node: EmulatedNode,
    epoch_ms: int,
    event_type: str,
    t0_s: int,
    t1_s: int,
    now_ms: int,
    cadence_s: int = 60,
) -> list:
    """Archive rows for one event type over [t0_s, t1_s], oldest first.

    Measurements land on the cadence grid; a DOWN host runs no tests, so
    those grid points never appear.
    """
    if event_type not in PERFSONAR_EVENTS:
        raise UnknownMetric(event_type)
    now_s = now_ms // 1000
    first = ((max(t0_s, epoch_ms // 1000) + cadence_s - 1) // cadence_s) * cadence_s
    rows = []
    for second in range(first, min(t1_s, now_s) + 1, cadence_s):
        if _second_is_down(node, epoch_ms, second):
            continue
        if event_type == "throughput":
            val = synth_value(node.profile, "throughput_bytes_per_second", second * 1000) * 8.0
        else:
            val = synth_value(node.profile, "packet_loss_ratio", second * 1000)
        rows.append({"ts": second, "val": val})
    return rows


def render_zabbix_history(
    node: EmulatedNode,
    epoch_ms: int,
    item_key: str,
    t0_s: int,
    t1_s: int,
    now_ms: int,
    cadence_s: int = 5,
) -> list:
    """history.get rows: clock and value as strings, oldest first."""
    if item_key not in ZABBIX_ITEMS:
        return []
    now_s = now_ms // 1000
    first = ((max(t0_s, epoch_ms // 1000) + cadence_s - 1) // cadence_s) * cadence_s
    rows = []
    for second in range(first, min(t1_s, now_s) + 1, cadence_s):
        if _second_is_down(node, epoch_ms, second):
            continue
        if item_key == "net.throughput.bytes":
            value = synth_value(
                node.profile, "throughput_bytes_per_second", second * 1000
            )
        else:
            value = synth_value(node.profile, "tcp_retransmits_total", second * 1000)
        rows.append({"itemid": item_key, "clock": str(second), "value": repr(value)})
    return rows


_GARBAGE_TEXT = "<<<not a metrics payload>>>\ngarbage{{{\n"
_GARBAGE_JSON = '{"rsp": <<<truncated'


# ---------------------------------------------------------------------------
# HTTP layer


class _QuietServer(ThreadingHTTPServer):
    daemon_threads = True

    def handle_error(self, request, client_address) -> None:
        # deliberate connection slams (DOWN faults, client timeouts)
        # would otherwise spray tracebacks over test output
        pass


class Testbed:
    """Running servers for one topology. Start binds every (node, tool)
    endpoint; `port_of` reports actual ports so port 0 is usable.
    """

    __test__ = False  # not a test class despite the name

    def __init__(
        self, topology: Topology, clock: Clock | None = None, host: str = "127.0.0.1"
    ):
        self.topology = topology
        self.clock: Clock = clock if clock is not None else SystemClock()
        self.host = host
        self._servers: list[ThreadingHTTPServer] = []
        self._threads: list[threading.Thread] = []
        self._ports: dict[tuple[str, ToolKind], int] = {}
        self._lock = threading.Lock()
        self._in_flight: dict[tuple[str, ToolKind], int] = {}
        self._in_flight_max: dict[tuple[str, ToolKind], int] = {}
        self._request_counts: dict[tuple[str, ToolKind], int] = {}
        self._zabbix_logins: dict[str, int] = {}
        self._zabbix_tokens: dict[str, set] = {}
        self._started = False

    # -- lifecycle

    def start(self) -> "Testbed":
        if self._started:
            return self
        try:
            for node in self.topology.nodes:
                for tool, port in node.tools:
                    handler = _make_handler(self, node, tool)
                    try:
                        server = _QuietServer((self.host, port), handler)
                    except OSError as exc:
                        raise PortInUse(
                            f"{node.node_id}/{tool.value}: cannot bind {self.host}:{port}: {exc}"
                        ) from exc
                    server.daemon_threads = True
                    self._servers.append(server)
                    self._ports[(node.node_id, tool)] = server.server_address[1]
                    thread = threading.Thread(
                        target=server.serve_forever,
                        kwargs={"poll_interval": 0.05},
                        daemon=True,
                        name=f"emu-{node.node_id}-{tool.value}",
                    )
                    thread.start()
                    self._threads.append(thread)
        except PortInUse:
            self.stop()
            raise
        self._started = True
        return self

    def stop(self) -> None:
        for server in self._servers:
            server.shutdown()
            server.server_close()
        for thread in self._threads:
            thread.join(timeout=2.0)
        self._servers.clear()
        self._threads.clear()
        self._started = False

    def __enter__(self) -> "Testbed":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()

    # -- introspection for tests and wiring

    def port_of(self, node_id: str, tool: ToolKind) -> int:
        return self._ports[(node_id, tool)]

    def base_url(self, node_id: str, tool: ToolKind) -> str:
        return f"http://{self.host}:{self.port_of(node_id, tool)}"

    def max_in_flight(self, node_id: str, tool: ToolKind) -> int:
        with self._lock:
            return self._in_flight_max.get((node_id, tool), 0)

    def request_count(self, node_id: str, tool: ToolKind) -> int:
        with self._lock:
            return self._request_counts.get((node_id, tool), 0)

    def expire_zabbix_tokens(self, node_id: str | None = None) -> None:
        with self._lock:
            if node_id is None:
                for tokens in self._zabbix_tokens.values():
                    tokens.clear()
            else:
                self._zabbix_tokens.get(node_id, set()).clear()

    def zabbix_login_count(self, node_id: str) -> int:
        with self._lock:
            return self._zabbix_logins.get(node_id, 0)

    # -- request handling (called from handler threads)

    def _enter_request(self, key: tuple[str, ToolKind]) -> None:
        with self._lock:
            live = self._in_flight.get(key, 0) + 1
            self._in_flight[key] = live
            self._in_flight_max[key] = max(self._in_flight_max.get(key, 0), live)
            self._request_counts[key] = self._request_counts.get(key, 0) + 1

    def _leave_request(self, key: tuple[str, ToolKind]) -> None:
        with self._lock:
            self._in_flight[key] = self._in_flight.get(key, 1) - 1

    def handle(
        self,
        handler: BaseHTTPRequestHandler,
        node: EmulatedNode,
        tool: ToolKind,
        method: str,
    ) -> None:
        key = (node.node_id, tool)
        self._enter_request(key)
        try:
            now_ms = self.clock.now_ms()
            fault = node.fault_at(now_ms - self.topology.epoch_ms)
            if fault is FaultKind.DOWN:
                handler.close_connection = True
                try:
                    handler.connection.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                handler.connection.close()
                return
            if fault is FaultKind.SLOW:
                # wall-clock stall: the point is to outlive client timeouts
                time.sleep(self.topology.slow_delay_s)
            if fault is FaultKind.GARBAGE:
                garbage = _GARBAGE_TEXT if tool is ToolKind.PROMETHEUS else _GARBAGE_JSON
                _send(handler, 200, garbage.encode(), "text/plain")
                return
            self._route(handler, node, tool, method, now_ms)
        except OSError:
            pass  # client gave up (timeout tests do this on purpose)
        finally:
            self._leave_request(key)

    def _route(
        self,
        handler: BaseHTTPRequestHandler,
        node: EmulatedNode,
        tool: ToolKind,
        method: str,
        now_ms: int,
    ) -> None:
        url = urlparse(handler.path)
        query = {k: v[-1] for k, v in parse_qs(url.query).items()}
        topo = self.topology
        if tool is ToolKind.PROMETHEUS and method == "GET" and url.path == "/metrics":
            _send(handler, 200, render_prometheus(node, now_ms).encode(), "text/plain")
            return
        if tool is ToolKind.NETDATA and method == "GET" and url.path == "/api/v1/data":
            chart = query.get("chart", "")
            if chart != NETDATA_CHART:
                _send(handler, 404, b"unknown chart", "text/plain")
                return
            try:
                after_s = int(query.get("after", "-1"))
                before_s = int(query["before"]) if "before" in query else None
            except ValueError:
                _send(handler, 400, b"bad window", "text/plain")
                return
            doc = render_netdata(
                node,
                topo.epoch_ms,
                chart,
                after_s,
                now_ms,
                topo.netdata_cadence_s,
                before_s=before_s,
            )
            _send_json(handler, 200, doc)
            return
        if (
            tool is ToolKind.NTOPNG
            and method == "GET"
            and url.path == "/lua/rest/v2/get/interface/data.lua"
        ):
            _send_json(handler, 200, render_ntopng(node, now_ms))
            return
        if tool is ToolKind.PERFSONAR and method == "GET":
            event = url.path.rsplit("/", 1)[-1]
            if not url.path.startswith("/archive/") or event not in PERFSONAR_EVENTS:
                _send(handler, 404, b"unknown archive", "text/plain")
                return
            try:
                t0_s = int(query["time-start"])
                t1_s = int(query["time-end"])
            except (KeyError, ValueError):
                _send(handler, 400, b"bad time range", "text/plain")
                return
            doc = render_perfsonar(
                node, topo.epoch_ms, event, t0_s, t1_s, now_ms, topo.perfsonar_cadence_s
            )
            _send_json(handler, 200, doc)
            return
        if tool is ToolKind.ZABBIX and method == "POST" and url.path == "/api_jsonrpc.php":
            self._zabbix_rpc(handler, node, now_ms)
            return
        _send(handler, 404, b"not found", "text/plain")

    def _zabbix_rpc(
        self, handler: BaseHTTPRequestHandler, node: EmulatedNode, now_ms: int
    ) -> None:
        length = int(handler.headers.get("Content-Length", "0"))
        try:
            req = json.loads(handler.rfile.read(length).decode())
        except (ValueError, UnicodeDecodeError):
            _send(handler, 400, b"bad json", "text/plain")
            return
        req_id = req.get("id")
        method = req.get("method")
        params = req.get("params", {})
        if method == "user.login":
            if (
                params.get("username") == ZABBIX_USER
                and params.get("password") == ZABBIX_PASSWORD
            ):
                with self._lock:
                    count = self._zabbix_logins.get(node.node_id, 0) + 1
                    self._zabbix_logins[node.node_id] = count
                    token = hashlib.md5(
                        f"{node.node_id}:{count}".encode()
                    ).hexdigest()
                    self._zabbix_tokens.setdefault(node.node_id, set()).add(token)
                _send_json(handler, 200, {"jsonrpc": "2.0", "result": token, "id": req_id})
            else:
                _send_json(
                    handler,
                    200,
                    {
                        "jsonrpc": "2.0",
                        "error": {"code": -32500, "message": "bad credentials"},
                        "id": req_id,
                    },
                )
            return
        if method == "history.get":
            with self._lock:
                valid = req.get("auth") in self._zabbix_tokens.get(node.node_id, set())
            if not valid:
                _send_json(
                    handler,
                    200,
                    {
                        "jsonrpc": "2.0",
                        "error": {"code": -32602, "message": "session expired"},
                        "id": req_id,
                    },
                )
                return
            item_key = params.get("itemids", "")
            try:
                t0_s = int(params["time_from"])
                t1_s = int(params["time_till"])
            except (KeyError, TypeError, ValueError):
                _send_json(
                    handler,
                    200,
                    {
                        "jsonrpc": "2.0",
                        "error": {"code": -32602, "message": "bad time range"},
                        "id": req_id,
                    },
                )
                return
            rows = render_zabbix_history(
                node,
                self.topology.epoch_ms,
                item_key,
                t0_s,
                t1_s,
                now_ms,
                self.topology.zabbix_cadence_s,
            )
            _send_json(handler, 200, {"jsonrpc": "2.0", "result": rows, "id": req_id})
            return
        _send_json(
            handler,
            200,
            {
                "jsonrpc": "2.0",
                "error": {"code": -32601, "message": f"unknown method {method!r}"},
                "id": req_id,
            },
        )


def serve_topology(
    topology: Topology, clock: Clock | None = None, host: str = "127.0.0.1"
) -> Testbed:
    """Bind and start every endpoint in the topology; returns the
    running Testbed. Raises PortInUse if any requested port is taken.
    """
    return Testbed(topology, clock=clock, host=host).start()


def _send(
    handler: BaseHTTPRequestHandler, status: int, body: bytes, content_type: str
) -> None:
    handler.send_response(status)
    handler.send_header("Content-Type", content_type)
    handler.send_header("Content-Length", str(len(body)))
    handler.end_headers()
    handler.wfile.write(body)


def _send_json(handler: BaseHTTPRequestHandler, status: int, doc) -> None:
    _send(
        handler,
        status,
        json.dumps(doc, separators=(",", ":")).encode(),
        "application/json",
    )


def _make_handler(testbed: Testbed, node: EmulatedNode, tool: ToolKind):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def do_GET(self):  # noqa: N802 (stdlib naming)
            testbed.handle(self, node, tool, "GET")

        def do_POST(self):  # noqa: N802
            testbed.handle(self, node, tool, "POST")

        def log_message(self, *args) -> None:
            pass

    return Handler


# ---------------------------------------------------------------------------
# downtime oracle


def _merge_intervals(intervals: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def _covered(merged: list[tuple[int, int]], t0: int, t1: int) -> bool:
    """True when [t0, t1) lies entirely inside the merged intervals."""
    cursor = t0
    for start, end in merged:
        if start > cursor:
            break
        if end > cursor:
            cursor = end
            if cursor >= t1:
                return True
    return cursor >= t1


def _max_free_span(merged: list[tuple[int, int]], t0: int, t1: int) -> int:
    """Longest stretch of [t0, t1) not covered by any interval."""
    best = 0
    cursor = t0
    for start, end in merged:
        if end <= t0:
            continue
        if start >= t1:
            break
        best = max(best, min(start, t1) - cursor)
        cursor = max(cursor, end)
    best = max(best, t1 - cursor)
    return best


# tools that serve history and so backfill everything but DOWN windows
_HISTORY_TOOLS = frozenset({ToolKind.NETDATA, ToolKind.ZABBIX, ToolKind.PERFSONAR})


def _grid_points_ms(t0_ms: int, t1_ms: int, cadence_ms: int) -> Iterable[int]:
    """Cadence-aligned sample instants inside [t0_ms, t1_ms)."""
    first = ((t0_ms + cadence_ms - 1) // cadence_ms) * cadence_ms
    return range(first, t1_ms, cadence_ms)


def downtime_oracle(
    topology: Topology,
    node_id: str,
    tool: ToolKind,
    t0_ms: int,
    t1_ms: int,
    step_ms: int,
    scrape_interval_ms: int,
) -> tuple[frozenset, frozenset]:
    """Which query buckets a node's fault schedule forces to NULL.

    Returns (must_null, may_null) as sets of bucket-start timestamps for
    the bucketing [t0 + k*step, ...). must_null buckets cannot hold any
    sample: for history-serving tools every cadence grid point in the
    bucket falls inside a DOWN window (SLOW and GARBAGE windows get
    backfilled once the tool answers again); for instantaneous tools the
    whole bucket sits inside fault windows of any kind, so every scrape
    attempt in it failed. may_null marks buckets whose fate depends on
    scrape phase: they touch a fault window, or (instantaneous tools)
    their fault-free span is too short to guarantee a scrape landed.
    Buckets in neither set are guaranteed to hold data, assuming the
    collector keeps scraping past t1.
    """
    if t1_ms <= t0_ms or step_ms <= 0 or scrape_interval_ms <= 0:
        raise ValueError("need t0 < t1 and positive step/interval")
    node = topology.node(node_id)
    epoch = topology.epoch_ms
    all_faults = _merge_intervals(
        (epoch + w.start_ms, epoch + w.end_ms) for w in node.fault_schedule
    )
    history_tool = tool in _HISTORY_TOOLS
    if history_tool:
        blocking = _merge_intervals(
            (epoch + w.start_ms, epoch + w.end_ms)
            for w in node.fault_schedule
            if w.kind is FaultKind.DOWN
        )
        cadence_ms = 1000 * {
            ToolKind.NETDATA: topology.netdata_cadence_s,
            ToolKind.ZABBIX: topology.zabbix_cadence_s,
            ToolKind.PERFSONAR: topology.perfsonar_cadence_s,
        }[tool]
    else:
        blocking = all_faults
    must_null = set()
    may_null = set()
    bucket = t0_ms
    while bucket < t1_ms:
        bucket_end = min(bucket + step_ms, t1_ms)
        if history_tool:
            # exact: data exists iff some grid point evades every DOWN window
            alive = any(
                not _covered(blocking, point, point + 1)
                for point in _grid_points_ms(bucket, bucket_end, cadence_ms)
            )
            forced = not alive
        else:
            forced = _covered(blocking, bucket, bucket_end)
        if forced:
            must_null.add(bucket)
        else:
            touches_fault = any(
                start < bucket_end and end > bucket for start, end in all_faults
            )
            phase_risk = not history_tool and _max_free_span(
                blocking, bucket, bucket_end
            ) < 2 * scrape_interval_ms
            if touches_fault or phase_risk:
                may_null.add(bucket)
        bucket += step_ms
    return frozenset(must_null), frozenset(may_null)
