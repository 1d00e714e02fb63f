/** End-to-end round-trip against the real daemon and its emulator,
 * driven entirely through the dashboard's own modules over HTTP.
 * Skipped when the daemon binary is not on PATH.
 */

import { ChildProcess, spawn, spawnSync } from "node:child_process"
import { mkdtempSync, writeFileSync } from "node:fs"
import { createServer } from "node:net"
import { tmpdir } from "node:os"
import { join } from "node:path"
import { afterAll, beforeAll, describe, expect, it } from "vitest"

import { ApiClient } from "../src/api.js"
import { submitCollector } from "../src/form.js"
import { EMPTY_FORM } from "../src/form.js"
import { renderChart } from "../src/chart.js"
import { resolveRange } from "../src/state.js"

const haveDaemon = spawnSync("netgraf", ["--help"], { stdio: "ignore" }).status === 0

const ADMIN_TOKEN = "e2e-admin-token-0123456789abcdef01234567"
const VIEWER_TOKEN = "e2e-viewer-token-0123456789abcdef0123456"
const INTERVAL_MS = 1000

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms))

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer()
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address()
      if (addr && typeof addr === "object") {
        const port = addr.port
        srv.close(() => resolve(port))
      } else {
        reject(new Error("no address"))
      }
    })
  })
}

/** Collect "node tool host:port" lines from the emulator's stdout. */
function readEndpoints(proc: ChildProcess, expected: number): Promise<Map<string, number>> {
  return new Promise((resolve, reject) => {
    const endpoints = new Map<string, number>()
    let buffer = ""
    const timer = setTimeout(() => reject(new Error(`emulator printed ${endpoints.size} endpoints`)), 15_000)
    proc.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString()
      for (const line of buffer.split("\n")) {
        const m = line.match(/^(\S+)\s+(\S+)\s+127\.0\.0\.1:(\d+)/)
        if (m) endpoints.set(`${m[1]}/${m[2]}`, Number(m[3]))
      }
      if (endpoints.size >= expected) {
        clearTimeout(timer)
        resolve(endpoints)
      }
    })
  })
}

function waitForLine(proc: ChildProcess, needle: string): Promise<string> {
  return new Promise((resolve, reject) => {
    let buffer = ""
    const timer = setTimeout(() => reject(new Error(`never saw ${needle} in: ${buffer}`)), 15_000)
    const onData = (chunk: Buffer) => {
      buffer += chunk.toString()
      if (buffer.includes(needle)) {
        clearTimeout(timer)
        resolve(buffer)
      }
    }
    proc.stdout!.on("data", onData)
    proc.stderr!.on("data", onData)
  })
}

describe.skipIf(!haveDaemon)("live daemon round-trip", () => {
  let emulator: ChildProcess
  let daemon: ChildProcess
  let endpoints: Map<string, number>
  let base: string

  beforeAll(async () => {
    emulator = spawn("netgraf", ["emulate", "--seed", "7"], { stdio: ["ignore", "pipe", "pipe"] })
    endpoints = await readEndpoints(emulator, 13)

    const work = mkdtempSync(join(tmpdir(), "netgraf-ui-e2e-"))
    const apiPort = await freePort()
    base = `http://127.0.0.1:${apiPort}`
    const config = [
      `data_dir: ${join(work, "data")}`,
      `api:`,
      `  port: ${apiPort}`,
      `tokens:`,
      `  admin: ${ADMIN_TOKEN}`,
      `  viewer: ${VIEWER_TOKEN}`,
      `pipeline:`,
      `  jitter_ms: 100`,
      `  tick_ms: 100`,
      `collectors:`,
      `  - id: node1-netdata`,
      `    tool: netdata`,
      `    host: 127.0.0.1`,
      `    port: ${endpoints.get("node1/netdata")}`,
      `    node_label: node1`,
      `    interval_ms: ${INTERVAL_MS}`,
      `    timeout_ms: 900`,
      ``,
    ].join("\n")
    const configPath = join(work, "netgraf.yml")
    writeFileSync(configPath, config)

    daemon = spawn("netgraf", ["run", "--config", configPath], { stdio: ["ignore", "pipe", "pipe"] })
    await waitForLine(daemon, "serving")
  }, 60_000)

  afterAll(async () => {
    daemon?.kill("SIGTERM")
    emulator?.kill("SIGTERM")
    await sleep(300)
  })

  it("resolves roles from live tokens", async () => {
    expect(await new ApiClient(base, ADMIN_TOKEN).probeRole()).toBe("admin")
    expect(await new ApiClient(base, VIEWER_TOKEN).probeRole()).toBe("viewer")
    expect(await new ApiClient(base, "not-a-real-token-0123456789abcdef012345").probeRole()).toBeNull()
  }, 15_000)

  it("adding a collector through the form puts its node in the picker within 2x the interval", async () => {
    const api = new ApiClient(base, ADMIN_TOKEN)

    // the preconfigured collector has to be visible first
    const warmupDeadline = Date.now() + 5000
    let nodes = await api.nodes()
    while (!nodes.some((n) => n.node === "node1") && Date.now() < warmupDeadline) {
      await sleep(150)
      nodes = await api.nodes()
    }
    expect(nodes.some((n) => n.node === "node1")).toBe(true)
    expect(nodes.some((n) => n.node === "node2")).toBe(false)

    const result = await submitCollector(api, {
      ...EMPTY_FORM,
      id: "node2-netdata",
      tool: "netdata",
      host: "127.0.0.1",
      port: String(endpoints.get("node2/netdata")),
      nodeLabel: "node2",
      intervalMs: String(INTERVAL_MS),
      timeoutMs: "900",
    })
    expect(result).toEqual({ ok: true, id: "node2-netdata" })
    const acked = Date.now()

    let appeared: number | null = null
    while (Date.now() - acked < 4000) {
      nodes = await api.nodes()
      if (nodes.some((n) => n.node === "node2")) {
        appeared = Date.now()
        break
      }
      await sleep(100)
    }
    expect(appeared).not.toBeNull()
    expect((appeared as number) - acked).toBeLessThanOrEqual(2 * INTERVAL_MS)
  }, 30_000)

  it("live data renders to a chart through the real query path", async () => {
    const viewer = new ApiClient(base, VIEWER_TOKEN)
    await sleep(2000) // a couple more scrape intervals of data
    const { t0, t1 } = resolveRange({ kind: "relative", lastMs: 30_000 }, Date.now())
    const frames = await viewer.queryRange({
      selector: "throughput_bytes_per_second",
      t0,
      t1,
      stepMs: 1000,
      agg: "AVG",
    })
    expect(frames.length).toBeGreaterThanOrEqual(1)
    const svg = renderChart(frames, { t0, t1 })
    expect(svg).toContain('class="seg"')
    expect(svg).toContain("netgraf-chart")
  }, 30_000)

  it("a duplicate id comes back as an inline form error", async () => {
    const api = new ApiClient(base, ADMIN_TOKEN)
    const result = await submitCollector(api, {
      ...EMPTY_FORM,
      id: "node2-netdata",
      tool: "netdata",
      host: "127.0.0.1",
      port: String(endpoints.get("node2/netdata")),
      nodeLabel: "node2",
      intervalMs: String(INTERVAL_MS),
      timeoutMs: "900",
    })
    expect(result.ok).toBe(false)
    if (!result.ok) {
      expect(result.errors.id).toMatch(/already exists/)
    }
  }, 15_000)

  it("viewer tokens cannot add collectors even when the form is bypassed", async () => {
    const viewerApi = new ApiClient(base, VIEWER_TOKEN)
    const result = await submitCollector(viewerApi, {
      ...EMPTY_FORM,
      id: "node3-netdata",
      tool: "netdata",
      host: "127.0.0.1",
      port: String(endpoints.get("node3/netdata")),
      nodeLabel: "node3",
      intervalMs: String(INTERVAL_MS),
      timeoutMs: "900",
    })
    expect(result.ok).toBe(false)
    if (!result.ok) {
      expect(result.formError).toMatch(/admin/)
    }
  }, 15_000)
})
