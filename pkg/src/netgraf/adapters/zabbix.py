"""Zabbix JSON-RPC client: user.login for a session token, history.get
for item values.

Tokens are cached per collector; a stale token gets exactly one re-login
retry per scrape, so token rotation never turns into a retry storm.
"""

from __future__ import annotations

import threading
from itertools import count

from .base import CollectorSpec, FetchWindow, RawReading, http_post_json
from .errors import AuthExpired, AuthFailed, MalformedResponse

DEFAULT_PORT = 10050
RPC_PATH = "/api_jsonrpc.php"

# the emulator contract mirrors Zabbix's invalid-params code for dead tokens
AUTH_EXPIRED_CODE = -32602

_rpc_id = count(1)


def _rpc(spec: CollectorSpec, method: str, params: dict, auth: str | None) -> dict:
    body = {
        "jsonrpc": "2.0",
        "method": method,
        "params": params,
        "id": next(_rpc_id),
    }
    if auth is not None:
        body["auth"] = auth
    resp = http_post_json(spec, spec.path or RPC_PATH, body)
    try:
        doc = resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"{spec.id}: not JSON") from exc
    if not isinstance(doc, dict) or ("result" not in doc and "error" not in doc):
        raise MalformedResponse(f"{spec.id}: neither result nor error")
    return doc


def zabbix_login(spec: CollectorSpec) -> str:
    if not spec.credentials:
        raise AuthFailed(f"{spec.id}: no credentials configured")
    username, password = spec.credentials
    doc = _rpc(
        spec,
        "user.login",
        {"username": username, "password": password},
        auth=None,
    )
    if "error" in doc:
        raise AuthFailed(f"{spec.id}: {doc['error']}")
    token = doc["result"]
    if not isinstance(token, str) or not token:
        raise MalformedResponse(f"{spec.id}: login result is not a token")
    return token


def zabbix_fetch_history(
    spec: CollectorSpec, token: str, item_key: str, t0: int, t1: int
) -> list[RawReading]:
    if t0 >= t1:
        raise ValueError("t0 must be < t1")
    doc = _rpc(
        spec,
        "history.get",
        {
            "itemids": item_key,
            "time_from": t0 // 1000,
            "time_till": t1 // 1000,
            "output": "extend",
        },
        auth=token,
    )
    if "error" in doc:
        error = doc["error"]
        if isinstance(error, dict) and error.get("code") == AUTH_EXPIRED_CODE:
            raise AuthExpired(f"{spec.id}: session token rejected")
        raise MalformedResponse(f"{spec.id}: {error}")
    rows = doc["result"]
    if not isinstance(rows, list):
        raise MalformedResponse(f"{spec.id}: history result is not a list")
    readings: list[RawReading] = []
    for row in rows:
        if not isinstance(row, dict) or "clock" not in row or "value" not in row:
            raise MalformedResponse(f"{spec.id}: history row missing clock/value")
        try:
            ts = int(row["clock"]) * 1000
            value = float(row["value"])
        except (TypeError, ValueError) as exc:
            raise MalformedResponse(f"{spec.id}: bad history row {row}") from exc
        readings.append(RawReading(source_metric=item_key, value=value, ts=ts))
    return readings


class ZabbixAdapter:
    default_port = DEFAULT_PORT
    extra_mappings: tuple = ()

    def __init__(self) -> None:
        self._tokens: dict[str, str] = {}
        self._lock = threading.Lock()

    def _token_for(self, spec: CollectorSpec) -> str:
        with self._lock:
            token = self._tokens.get(spec.id)
        if token is None:
            token = zabbix_login(spec)
            with self._lock:
                self._tokens[spec.id] = token
        return token

    def _drop_token(self, spec: CollectorSpec) -> None:
        with self._lock:
            self._tokens.pop(spec.id, None)

    def fetch(self, spec: CollectorSpec, window: FetchWindow) -> list[RawReading]:
        items = spec.options.get("items", [])
        readings: list[RawReading] = []
        for item_key in items:
            token = self._token_for(spec)
            try:
                rows = zabbix_fetch_history(
                    spec, token, item_key, window.t0_ms, window.t1_ms
                )
            except AuthExpired:
                self._drop_token(spec)
                token = self._token_for(spec)
                rows = zabbix_fetch_history(
                    spec, token, item_key, window.t0_ms, window.t1_ms
                )
            readings.extend(rows)
        return readings
