"""HTTP query service: node and metric discovery, range queries, a
Grafana-SimpleJSON-compatible dialect, and runtime collector admin.

Two static principals (admin, viewer) authenticated by bearer token.
Every route checks the token before doing anything else; viewer tokens
reach only read endpoints. Handlers are stateless: queries go straight
to the store, mutations go through the pipeline's control methods, and
a persistence callback lets the daemon record admin changes so they
survive restarts.
"""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from enum import Enum
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable
from urllib.parse import unquote, urlparse

from .clock import Clock, SystemClock
from .config import ConfigError, parse_collector
from .model import MetricCatalog, SELF_TOOL, parse_series_key
from .pipeline import DuplicateCollector, Pipeline, UnknownCollector
from .store import Aggregator, InvalidRange, InvalidSelector, SeriesStore

MAX_BODY_BYTES = 1 << 20
DEFAULT_STALE_INTERVAL_MS = 10_000


class Role(Enum):
    VIEWER = "viewer"
    ADMIN = "admin"


class _BadRequest(Exception):
    """Maps to a 400 with an error kind the client can branch on."""

    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


def _parse_time_ms(value, field: str) -> int:
    """Epoch ms from an integer or an ISO-8601 string."""
    if isinstance(value, bool):
        raise _BadRequest("InvalidRange", f"{field} must be a timestamp")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
        except ValueError:
            raise _BadRequest("InvalidRange", f"{field}: bad timestamp {value!r}")
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp() * 1000)
    raise _BadRequest("InvalidRange", f"{field} must be a timestamp")


def _require_int(body: dict, field: str) -> int:
    value = body.get(field)
    if isinstance(value, bool) or not isinstance(value, int):
        raise _BadRequest("InvalidRange", f"{field} must be an integer")
    return value


class QueryService:
    """The daemon's HTTP face. Construct, then start()/stop()."""

    def __init__(
        self,
        store: SeriesStore,
        pipeline: Pipeline,
        tokens: dict[str, Role],
        *,
        host: str = "127.0.0.1",
        port: int = 8686,
        cors_origin: str = "*",
        clock: Clock | None = None,
        catalog: MetricCatalog | None = None,
        on_collector_added: Callable | None = None,
        on_collector_removed: Callable | None = None,
    ):
        for token in tokens:
            if len(token) < 32:
                raise ValueError("api tokens must be at least 32 characters")
        self._store = store
        self._pipeline = pipeline
        self._tokens = dict(tokens)
        self._cors_origin = cors_origin
        self._clock = clock or SystemClock()
        self._catalog = catalog or MetricCatalog()
        self._on_added = on_collector_added
        self._on_removed = on_collector_removed
        self._server = _ApiServer((host, port), _Handler, service=self)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def url(self, path: str = "") -> str:
        host = self._server.server_address[0]
        return f"http://{host}:{self.port}{path}"

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="netgraf-api", daemon=True
        )
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
            self._thread = None

    # -- auth and routing ---------------------------------------------------

    def authenticate(self, header: str | None) -> Role | None:
        if not header or not header.startswith("Bearer "):
            return None
        return self._tokens.get(header[len("Bearer ") :].strip())

    def route(self, method: str, path: str):
        """(required role, handler) for a known route, else None."""
        table = {
            ("GET", "/"): (Role.VIEWER, self._handle_health),
            ("GET", "/api/v1/nodes"): (Role.VIEWER, self._handle_nodes),
            ("GET", "/api/v1/metrics"): (Role.VIEWER, self._handle_metrics),
            ("POST", "/api/v1/query_range"): (Role.VIEWER, self._handle_query_range),
            ("POST", "/search"): (Role.VIEWER, self._handle_search),
            ("POST", "/query"): (Role.VIEWER, self._handle_query),
            ("POST", "/api/v1/admin/collectors"): (Role.ADMIN, self._handle_admin_add),
        }
        hit = table.get((method, path))
        if hit:
            return hit
        if method == "DELETE" and path.startswith("/api/v1/admin/collectors/"):
            return (Role.ADMIN, self._handle_admin_delete)
        return None

    # -- handlers: (body, path) -> (status, payload) ------------------------

    def _handle_health(self, body, path):
        return 200, {"status": "ok"}

    def _handle_nodes(self, body, path):
        tails = self._store.series_tails()
        by_node: dict[str, dict] = {}
        for key_text, last_ts in tails.items():
            labels = dict(parse_series_key(key_text).labels.pairs)
            node, tool = labels["node"], labels["tool"]
            if tool == SELF_TOOL:
                continue  # failure counters must not mask a silent node
            info = by_node.setdefault(node, {"tools": set(), "last_seen_ms": 0})
            info["tools"].add(tool)
            info["last_seen_ms"] = max(info["last_seen_ms"], last_ts)

        intervals: dict[str, int] = {}
        fallback = DEFAULT_STALE_INTERVAL_MS
        for row in self._pipeline.collector_status():
            intervals[row["node"]] = max(
                intervals.get(row["node"], 0), row["interval_ms"]
            )
            fallback = max(fallback, row["interval_ms"])

        now = self._clock.now_ms()
        nodes = []
        for node in sorted(by_node):
            info = by_node[node]
            threshold = 3 * intervals.get(node, fallback)
            nodes.append(
                {
                    "node": node,
                    "tools": sorted(info["tools"]),
                    "last_seen_ms": info["last_seen_ms"],
                    "stale": now - info["last_seen_ms"] > threshold,
                }
            )
        return 200, {"nodes": nodes}

    def _handle_metrics(self, body, path):
        metrics = [
            {"name": e.name, "kind": e.kind.value, "unit": e.unit}
            for e in self._catalog.entries()
        ]
        return 200, {"metrics": metrics}

    def _handle_query_range(self, body, path):
        if not isinstance(body, dict):
            raise _BadRequest("InvalidRequest", "body must be a JSON object")
        selector = body.get("selector")
        if not isinstance(selector, str):
            raise _BadRequest("InvalidSelector", "selector must be a string")
        t0 = _require_int(body, "t0")
        t1 = _require_int(body, "t1")
        step_ms = _require_int(body, "step_ms")
        agg_name = body.get("agg", "AVG")
        if not isinstance(agg_name, str) or agg_name.upper() not in Aggregator.__members__:
            raise _BadRequest("InvalidRequest", f"unknown agg {agg_name!r}")
        frames = self._store.query_range(
            selector, t0, t1, step_ms, Aggregator[agg_name.upper()]
        )
        return 200, {
            "frames": [
                {"series": f.series.text(), "points": [[ts, v] for ts, v in f.points]}
                for f in frames
            ]
        }

    def _handle_search(self, body, path):
        target = ""
        if isinstance(body, dict) and isinstance(body.get("target"), str):
            target = body["target"]
        names = sorted(k.text() for k in self._store.list_series("*"))
        return 200, [n for n in names if target in n]

    def _handle_query(self, body, path):
        if not isinstance(body, dict):
            raise _BadRequest("InvalidRequest", "body must be a JSON object")
        window = body.get("range")
        if not isinstance(window, dict):
            raise _BadRequest("InvalidRange", "range must be an object")
        t0 = _parse_time_ms(window.get("from"), "range.from")
        t1 = _parse_time_ms(window.get("to"), "range.to")
        interval = body.get("intervalMs", 1000)
        if isinstance(interval, bool) or not isinstance(interval, int):
            raise _BadRequest("InvalidRange", "intervalMs must be an integer")
        step_ms = max(1000, interval)
        targets = body.get("targets", [])
        if not isinstance(targets, list):
            raise _BadRequest("InvalidRequest", "targets must be a list")
        out = []
        for entry in targets:
            target = entry.get("target") if isinstance(entry, dict) else None
            if not isinstance(target, str) or not target:
                continue
            frames = self._store.query_range(target, t0, t1, step_ms, Aggregator.AVG)
            for frame in frames:
                out.append(
                    {
                        "target": frame.series.text(),
                        "datapoints": [[v, ts] for ts, v in frame.points],
                    }
                )
        return 200, out

    def _handle_admin_add(self, body, path):
        if not isinstance(body, dict):
            raise _BadRequest("InvalidRequest", "body must be a JSON object")
        try:
            spec = parse_collector(body, "collector")
        except ConfigError as exc:
            raise _BadRequest("InvalidCollector", str(exc))
        try:
            self._pipeline.add_collector(spec)
        except DuplicateCollector as exc:
            return 409, {"error": "DuplicateCollector", "message": str(exc)}
        except Exception as exc:
            raise _BadRequest("InvalidCollector", str(exc))
        if self._on_added:
            self._on_added(spec)
        return 201, {"id": spec.id}

    def _handle_admin_delete(self, body, path):
        spec_id = unquote(path.rsplit("/", 1)[-1])
        try:
            self._pipeline.remove_collector(spec_id)
        except UnknownCollector:
            return 404, {"error": "UnknownCollector", "message": spec_id}
        if self._on_removed:
            self._on_removed(spec_id)
        return 200, {"id": spec_id, "disabled": True}


class _ApiServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr, handler, service: QueryService):
        self.service = service
        super().__init__(addr, handler)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: _ApiServer

    def log_message(self, fmt, *args):  # no stderr chatter under test
        pass

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_DELETE(self):
        self._dispatch("DELETE")

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors_headers(preflight=True)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _dispatch(self, method: str) -> None:
        service = self.server.service
        path = urlparse(self.path).path

        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY_BYTES:
            self.close_connection = True
            self._send(413, {"error": "BodyTooLarge"})
            return
        raw = self.rfile.read(length) if length else b""

        role = service.authenticate(self.headers.get("Authorization"))
        if role is None:
            self._send(401, {"error": "Unauthenticated"})
            return
        hit = service.route(method, path)
        if hit is None:
            self._send(404, {"error": "NotFound"})
            return
        required, handler = hit
        if required is Role.ADMIN and role is not Role.ADMIN:
            self._send(403, {"error": "Forbidden"})
            return

        body = None
        if raw:
            try:
                body = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, ValueError):
                self._send(400, {"error": "MalformedBody"})
                return
        try:
            status, payload = handler(body, path)
        except _BadRequest as exc:
            self._send(400, {"error": exc.kind, "message": str(exc)})
            return
        except InvalidSelector as exc:
            self._send(400, {"error": "InvalidSelector", "message": str(exc)})
            return
        except InvalidRange as exc:
            self._send(400, {"error": "InvalidRange", "message": str(exc)})
            return
        self._send(status, payload)

    def _cors_headers(self, preflight: bool = False) -> None:
        self.send_header(
            "Access-Control-Allow-Origin", self.server.service._cors_origin
        )
        if preflight:
            self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
            self.send_header("Access-Control-Max-Age", "600")

    def _send(self, status: int, payload) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self._cors_headers()
        if status == 401:
            self.send_header("WWW-Authenticate", "Bearer")
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)
