/** Dashboard state: the panel list, the global time range, the role.
 *
 * All mutations go through the Dashboard container so there is exactly
 * one place state changes happen; panel refresh loops only read from it.
 */

import { parseSelector } from "./selector.js"
import type { PanelSpec, Role } from "./types.js"
import { AGGREGATORS, DEFAULT_REFRESH_MS, MIN_REFRESH_MS, MIN_STEP_MS, PanelError } from "./types.js"

export type TimeRange =
  | { kind: "relative"; lastMs: number }
  | { kind: "absolute"; t0: number; t1: number }

export const LAST_3H: TimeRange = { kind: "relative", lastMs: 3 * 3_600_000 }

/** Relative ranges re-evaluate against the clock on every refresh. */
export function resolveRange(range: TimeRange, nowMs: number): { t0: number; t1: number } {
  if (range.kind === "relative") {
    return { t0: nowMs - range.lastMs, t1: nowMs }
  }
  return { t0: range.t0, t1: range.t1 }
}

/** Validates a panel spec, including ones parsed from imported layout
 * JSON, so every field is checked for shape as well as range. */
export function validatePanel(spec: unknown): PanelSpec {
  if (typeof spec !== "object" || spec === null || Array.isArray(spec)) {
    throw new PanelError("panel spec must be an object")
  }
  const p = spec as Record<string, unknown>
  if (typeof p.title !== "string" || !p.title.trim()) {
    throw new PanelError("panel title must be non-empty")
  }
  if (typeof p.refreshMs !== "number" || !Number.isFinite(p.refreshMs)) {
    throw new PanelError("refresh_ms must be a number")
  }
  if (p.refreshMs < MIN_REFRESH_MS) {
    throw new PanelError(`refresh_ms ${p.refreshMs} below the ${MIN_REFRESH_MS} ms floor`)
  }
  if (typeof p.stepMs !== "number" || !Number.isFinite(p.stepMs)) {
    throw new PanelError("step_ms must be a number")
  }
  if (p.stepMs < MIN_STEP_MS) {
    throw new PanelError(`step_ms ${p.stepMs} below the ${MIN_STEP_MS} ms floor`)
  }
  if (typeof p.agg !== "string" || !(AGGREGATORS as string[]).includes(p.agg)) {
    throw new PanelError(`unknown aggregator ${String(p.agg)}`)
  }
  if (p.render !== "LINE" && p.render !== "STAT") {
    throw new PanelError(`unknown render kind ${String(p.render)}`)
  }
  if (typeof p.selector !== "string") {
    throw new PanelError("bad selector: selector must be a string")
  }
  try {
    parseSelector(p.selector)
  } catch (err) {
    throw new PanelError(`bad selector: ${err instanceof Error ? err.message : String(err)}`)
  }
  return spec as PanelSpec
}

/** The out-of-the-box view: throughput, loss, and retransmit rate for
 * every node over the last three hours. Counters render as rates so the
 * trace shows events per second rather than a lifetime total. */
export function defaultPanels(): PanelSpec[] {
  const panels: PanelSpec[] = [
    {
      title: "Throughput (bytes/s)",
      selector: "throughput_bytes_per_second",
      stepMs: 10_000,
      agg: "AVG",
      refreshMs: DEFAULT_REFRESH_MS,
      render: "LINE",
    },
    {
      title: "Packet loss (ratio)",
      selector: "packet_loss_ratio",
      stepMs: 10_000,
      agg: "AVG",
      refreshMs: DEFAULT_REFRESH_MS,
      render: "LINE",
    },
    {
      title: "TCP retransmits (events/s)",
      selector: "tcp_retransmits_total",
      stepMs: 10_000,
      agg: "RATE",
      refreshMs: DEFAULT_REFRESH_MS,
      render: "LINE",
    },
  ]
  return panels.map(validatePanel)
}

export class Dashboard {
  panels: PanelSpec[]
  range: TimeRange
  role: Role | null = null
  nodeFilter: string | null = null

  constructor(panels: PanelSpec[] = defaultPanels(), range: TimeRange = LAST_3H) {
    this.panels = panels.map(validatePanel)
    this.range = range
  }

  setRange(range: TimeRange): void {
    if (range.kind === "absolute" && range.t0 >= range.t1) {
      throw new PanelError("range start must be before range end")
    }
    this.range = range
  }

  addPanel(spec: PanelSpec): void {
    this.panels = [...this.panels, validatePanel(spec)]
  }

  removePanel(index: number): void {
    this.panels = this.panels.filter((_, i) => i !== index)
  }

  /** Layout persistence is a local JSON export, not a server feature. */
  exportLayout(): string {
    return JSON.stringify({ panels: this.panels }, null, 2)
  }

  importLayout(json: string): void {
    const parsed: unknown = JSON.parse(json)
    const panels =
      typeof parsed === "object" && parsed !== null
        ? (parsed as Record<string, unknown>).panels
        : undefined
    if (!Array.isArray(panels)) {
      throw new PanelError("layout JSON must contain a panels array")
    }
    this.panels = panels.map(validatePanel)
  }
}
