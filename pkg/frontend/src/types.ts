/** Wire types mirroring the daemon's JSON contracts, plus panel specs.
 *
 * Timestamps are epoch milliseconds as integers, values are doubles, and
 * gaps arrive as JSON null. The client never rounds or reshapes numbers:
 * what the daemon sent is what the chart sees.
 */

export type Agg = "AVG" | "MIN" | "MAX" | "LAST" | "SUM" | "RATE"

export const AGGREGATORS: Agg[] = ["AVG", "MIN", "MAX", "LAST", "SUM", "RATE"]

export type Role = "admin" | "viewer"

export type RenderKind = "LINE" | "STAT"

/** One point: [ts_ms, value]; null value is a gap, never interpolated. */
export type Point = [number, number | null]

export interface Frame {
  series: string
  points: Point[]
}

export interface NodeInfo {
  node: string
  tools: string[]
  last_seen_ms: number
  stale: boolean
}

export interface MetricInfo {
  name: string
  kind: string
  unit: string
}

export interface QueryRangeRequest {
  selector: string
  t0: number
  t1: number
  stepMs: number
  agg: Agg
}

// -- panels ------------------------------------------------------------

export const MIN_REFRESH_MS = 1000
export const MIN_STEP_MS = 1000
export const DEFAULT_REFRESH_MS = 5000

export interface PanelSpec {
  title: string
  selector: string
  stepMs: number
  agg: Agg
  refreshMs: number
  render: RenderKind
}

export class PanelError extends Error {}
