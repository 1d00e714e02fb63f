"""Command-line front end: run the daemon, generate a config, run
one-shot queries, render report files, or launch the local emulator.

Exit codes: 0 success (including empty query results), 2 bad flags or
invalid config, 3 store lock/corruption, 4 daemon unreachable, 5 auth
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import signal
import sys
import threading
from datetime import datetime, timezone

import requests

from .api import QueryService, Role
from .clock import SystemClock
from .config import (
    ConfigError,
    UnknownTemplate,
    effective_collectors,
    generate_config,
    load_config,
    overlay_add,
    overlay_disable,
)
from .pipeline import Pipeline
from .store import SeriesStore, StoreError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_STORE = 3
EXIT_UNREACHABLE = 4
EXIT_AUTH = 5

DEFAULT_URL = "http://127.0.0.1:8686"
TOKEN_ENV = "NETGRAF_TOKEN"
RETENTION_SWEEP_MS = 60_000


def _fail(message: str, code: int) -> int:
    print(f"netgraf: {message}", file=sys.stderr)
    return code


def _parse_when(text: str, flag: str) -> int:
    """Epoch ms from a raw integer or an ISO-8601 timestamp."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise ValueError(f"{flag}: expected epoch ms or ISO-8601, got {text!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


# ---------------------------------------------------------------------------
# netgraf run


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        return _fail(f"config error: {exc}", EXIT_USAGE)

    os.makedirs(config.data_dir, exist_ok=True)
    try:
        store = SeriesStore.open(config.data_dir)
    except StoreError as exc:
        return _fail(str(exc), EXIT_STORE)

    try:
        collectors = effective_collectors(config)
    except ConfigError as exc:
        store.close()
        return _fail(f"overlay error: {exc}", EXIT_USAGE)

    pipeline = Pipeline(collectors, store, config=config.pipeline)
    service = QueryService(
        store,
        pipeline,
        {config.tokens.admin: Role.ADMIN, config.tokens.viewer: Role.VIEWER},
        host=config.api.host,
        port=config.api.port,
        cors_origin=config.api.cors_origin,
        on_collector_added=lambda spec: overlay_add(config.data_dir, spec),
        on_collector_removed=lambda sid: overlay_disable(config.data_dir, sid),
    )
    service.start()
    worker = threading.Thread(target=pipeline.run_forever, name="netgraf-pipeline")
    worker.start()
    print(
        f"netgraf: serving http://{config.api.host}:{service.port} "
        f"({len(collectors)} collectors, data in {config.data_dir})",
        flush=True,
    )

    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())

    clock = SystemClock()
    next_purge = clock.now_ms() + RETENTION_SWEEP_MS
    while not stop.wait(timeout=1.0):
        if clock.now_ms() >= next_purge:
            store.enforce_retention(config.retention, clock.now_ms())
            next_purge = clock.now_ms() + RETENTION_SWEEP_MS

    pipeline.stop()
    worker.join(timeout=10)
    service.stop()
    store.close()  # flushes the append log
    print("netgraf: shut down cleanly", flush=True)
    return EXIT_OK


# ---------------------------------------------------------------------------
# netgraf gen-config


def cmd_gen_config(args) -> int:
    try:
        text = generate_config(args.template)
    except UnknownTemplate:
        return _fail(f"unknown template {args.template!r}", EXIT_USAGE)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# netgraf query / report


def _fetch_frames(args) -> tuple[int, list | None]:
    """(exit code, frames) for a one-shot range query."""
    token = os.environ.get(TOKEN_ENV)
    if not token:
        return _fail(f"{TOKEN_ENV} is not set", EXIT_AUTH), None
    try:
        t0 = _parse_when(getattr(args, "from"), "--from")
        t1 = _parse_when(args.to, "--to")
    except ValueError as exc:
        return _fail(str(exc), EXIT_USAGE), None
    if t0 >= t1:
        return _fail("--from must be before --to", EXIT_USAGE), None

    body = {
        "selector": args.selector,
        "t0": t0,
        "t1": t1,
        "step_ms": args.step,
        "agg": args.agg,
    }
    try:
        resp = requests.post(
            f"{args.url}/api/v1/query_range",
            headers={"Authorization": f"Bearer {token}"},
            json=body,
            timeout=args.timeout,
        )
    except requests.RequestException as exc:
        return _fail(f"cannot reach daemon at {args.url}: {exc}", EXIT_UNREACHABLE), None

    if resp.status_code in (401, 403):
        return _fail("authentication failed (check NETGRAF_TOKEN)", EXIT_AUTH), None
    if resp.status_code == 400:
        detail = resp.json().get("message", resp.text)
        return _fail(f"rejected query: {detail}", EXIT_USAGE), None
    if resp.status_code != 200:
        return _fail(f"daemon error: HTTP {resp.status_code}", EXIT_UNREACHABLE), None
    return EXIT_OK, resp.json()["frames"]


def _write_csv(frames: list, out) -> None:
    writer = csv.writer(out)  # csv module emits RFC-4180 CRLF line endings
    writer.writerow(["series", "ts", "value"])
    for frame in frames:
        for ts, value in frame["points"]:
            writer.writerow([frame["series"], ts, "" if value is None else repr(value)])


def _print_table(frames: list) -> None:
    if not frames:
        print("(no series matched)")
        return
    width = max(len(f["series"]) for f in frames)
    for frame in frames:
        for ts, value in frame["points"]:
            cell = "null" if value is None else f"{value:.6g}"
            print(f"{frame['series']:<{width}}  {ts}  {cell}")


def cmd_query(args) -> int:
    code, frames = _fetch_frames(args)
    if code != EXIT_OK:
        return code
    if args.format == "json":
        print(json.dumps({"frames": frames}, indent=2))
    elif args.format == "csv":
        _write_csv(frames, sys.stdout)
    else:
        _print_table(frames)
    return EXIT_OK


def _metric_of(series_text: str) -> str:
    return series_text.partition("{")[0]


def _render_figures(frames: list, out_dir: str) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_metric: dict[str, list] = {}
    for frame in frames:
        by_metric.setdefault(_metric_of(frame["series"]), []).append(frame)

    written = []
    for metric in sorted(by_metric):
        fig, ax = plt.subplots(figsize=(10, 4))
        for frame in by_metric[metric]:
            xs = [datetime.fromtimestamp(ts / 1000, tz=timezone.utc) for ts, _ in frame["points"]]
            ys = [float("nan") if v is None else v for _, v in frame["points"]]
            label = frame["series"][len(metric) :].strip("{}") or frame["series"]
            ax.plot(xs, ys, label=label, linewidth=1.2)
        ax.set_title(metric)
        ax.set_xlabel("time (UTC)")
        ax.grid(True, alpha=0.3)
        if len(by_metric[metric]) <= 12:
            ax.legend(fontsize="small")
        fig.autofmt_xdate()
        path = os.path.join(out_dir, f"{metric}.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def cmd_report(args) -> int:
    code, frames = _fetch_frames(args)
    if code != EXIT_OK:
        return code
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        return _fail(f"cannot create {args.out}: {exc}", EXIT_USAGE)

    csv_path = os.path.join(args.out, "report.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        _write_csv(frames, handle)
    written = [csv_path] + _render_figures(frames, args.out)
    for path in written:
        print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# netgraf emulate


def cmd_emulate(args) -> int:
    from .emulator import DEFAULT_TOOL_PORTS, Testbed, default_topology

    clock = SystemClock()
    topology = default_topology(
        epoch_ms=clock.now_ms(), seed=args.seed, ephemeral_ports=not args.standard_ports
    )
    testbed = Testbed(topology, clock=clock)
    try:
        testbed.start()
    except OSError as exc:
        return _fail(f"cannot bind emulator ports: {exc}", EXIT_USAGE)

    for node in topology.nodes:
        for tool, _ in node.tools:
            port = testbed.port_of(node.node_id, tool)
            print(f"{node.node_id:8s} {tool.value:12s} 127.0.0.1:{port}", flush=True)

    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    stop.wait(timeout=args.duration)
    testbed.stop()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netgraf",
        description="Unified network-metrics daemon: collect, store, query.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the daemon")
    run.add_argument("--config", required=True, help="path to the YAML config")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen-config", help="emit a ready-to-edit config")
    gen.add_argument("--template", required=True, help="template name (chameleon)")
    gen.add_argument("--output", "-o", help="write to a file instead of stdout")
    gen.set_defaults(func=cmd_gen_config)

    def query_flags(p):
        p.add_argument("--selector", required=True, help="series selector")
        p.add_argument("--from", required=True, help="range start (epoch ms or ISO-8601)")
        p.add_argument("--to", required=True, help="range end (epoch ms or ISO-8601)")
        p.add_argument("--step", required=True, type=int, help="bucket width in ms")
        p.add_argument("--agg", default="AVG",
                       choices=["AVG", "MIN", "MAX", "LAST", "SUM", "RATE"])
        p.add_argument("--url", default=DEFAULT_URL, help="daemon base URL")
        p.add_argument("--timeout", type=float, default=10.0, help="HTTP timeout (s)")

    query = sub.add_parser("query", help="run one range query and print it")
    query_flags(query)
    query.add_argument("--format", default="table", choices=["table", "json", "csv"])
    query.set_defaults(func=cmd_query)

    report = sub.add_parser("report", help="write CSV plus PNG charts for a range query")
    query_flags(report)
    report.add_argument("--out", required=True, help="output directory")
    report.set_defaults(func=cmd_report)

    emulate = sub.add_parser("emulate", help="serve the five-node tool emulator")
    emulate.add_argument("--seed", type=int, default=1337)
    emulate.add_argument("--duration", type=float, default=None,
                         help="stop after N seconds (default: run until signalled)")
    emulate.add_argument("--standard-ports", action="store_true",
                         help="bind the real tool ports instead of ephemeral ones")
    emulate.set_defaults(func=cmd_emulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
