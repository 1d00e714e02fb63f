/** Gap-aware SVG line charts.
 *
 * A null bucket is an outage, not a zero: the line breaks there and
 * nothing is ever interpolated across it. Each unbroken run of points
 * becomes its own path segment, so a rendered chart carries the gap
 * structure in its markup where tests (and humans) can read it back.
 */

import type { Frame, Point } from "./types.js"

export interface ChartOptions {
  width: number
  height: number
  padLeft: number
  padRight: number
  padTop: number
  padBottom: number
  // x domain; when omitted it is fitted to the data
  t0?: number
  t1?: number
  showLegend: boolean
}

export const DEFAULT_CHART: ChartOptions = {
  width: 640,
  height: 240,
  padLeft: 64,
  padRight: 12,
  padTop: 10,
  padBottom: 22,
  showLegend: true,
}

export const PALETTE = [
  "#4fc3f7", "#00d474", "#ffa502", "#ff4757", "#b48cff", "#f78fb3",
  "#7bed9f", "#70a1ff", "#eccc68", "#ff7f50", "#2ed573", "#a4b0be",
]

export interface SegmentPoint {
  ts: number
  value: number
}

/** Split a point list into unbroken runs of non-null values. */
export function segments(points: Point[]): SegmentPoint[][] {
  const runs: SegmentPoint[][] = []
  let current: SegmentPoint[] = []
  for (const [ts, value] of points) {
    if (value === null) {
      if (current.length) runs.push(current)
      current = []
    } else {
      current.push({ ts, value })
    }
  }
  if (current.length) runs.push(current)
  return runs
}

/** Gap extents as [start, end) intervals in ms.
 *
 * A run of null buckets starting at ts a and ending at ts b covers
 * [a, b + stepMs): the last null bucket extends one step past its own
 * start, same as the half-open bucket convention on the server.
 */
export function gapIntervals(points: Point[], stepMs: number): [number, number][] {
  const gaps: [number, number][] = []
  let gapStart: number | null = null
  let gapLast = 0
  for (const [ts, value] of points) {
    if (value === null) {
      if (gapStart === null) gapStart = ts
      gapLast = ts
    } else if (gapStart !== null) {
      gaps.push([gapStart, gapLast + stepMs])
      gapStart = null
    }
  }
  if (gapStart !== null) {
    gaps.push([gapStart, gapLast + stepMs])
  }
  return gaps
}

interface Domain {
  t0: number
  t1: number
  vMin: number
  vMax: number
}

function fitDomain(frames: Frame[], opts: ChartOptions): Domain | null {
  let tMin = Infinity
  let tMax = -Infinity
  let vMin = Infinity
  let vMax = -Infinity
  for (const frame of frames) {
    for (const [ts, value] of frame.points) {
      tMin = Math.min(tMin, ts)
      tMax = Math.max(tMax, ts)
      if (value !== null) {
        vMin = Math.min(vMin, value)
        vMax = Math.max(vMax, value)
      }
    }
  }
  if (!Number.isFinite(vMin)) {
    return null // no non-null point anywhere
  }
  if (vMin === vMax) {
    const pad = vMin === 0 ? 1 : Math.abs(vMin) * 0.1
    vMin -= pad
    vMax += pad
  }
  return {
    t0: opts.t0 ?? tMin,
    t1: opts.t1 ?? (tMax > tMin ? tMax : tMin + 1),
    vMin,
    vMax,
  }
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
}

function formatValue(v: number): string {
  const abs = Math.abs(v)
  if (abs >= 1e9) return `${(v / 1e9).toFixed(1)}G`
  if (abs >= 1e6) return `${(v / 1e6).toFixed(1)}M`
  if (abs >= 1e3) return `${(v / 1e3).toFixed(1)}k`
  if (abs > 0 && abs < 0.01) return v.toExponential(1)
  return abs >= 10 || Number.isInteger(v) ? String(Math.round(v * 10) / 10) : v.toFixed(3)
}

function formatTime(ts: number): string {
  const d = new Date(ts)
  const hh = String(d.getUTCHours()).padStart(2, "0")
  const mm = String(d.getUTCMinutes()).padStart(2, "0")
  return `${hh}:${mm}`
}

const wrapSvg = (opts: ChartOptions, content: string): string =>
  `<svg xmlns="http://www.w3.org/2000/svg" width="${opts.width}" height="${opts.height}" ` +
  `viewBox="0 0 ${opts.width} ${opts.height}" class="netgraf-chart">${content}</svg>`

export function renderNoData(options: Partial<ChartOptions> = {}): string {
  const opts = { ...DEFAULT_CHART, ...options }
  const text =
    `<text x="${opts.width / 2}" y="${opts.height / 2}" text-anchor="middle" ` +
    `class="chart-empty">no data</text>`
  return wrapSvg(opts, text)
}

export function renderChart(frames: Frame[], options: Partial<ChartOptions> = {}): string {
  const opts = { ...DEFAULT_CHART, ...options }
  const domain = fitDomain(frames, opts)
  if (domain === null) {
    return renderNoData(options)
  }

  const left = opts.padLeft
  const right = opts.width - opts.padRight
  const top = opts.padTop
  const bottom = opts.height - opts.padBottom
  const xSpan = domain.t1 - domain.t0
  const ySpan = domain.vMax - domain.vMin

  const x = (ts: number) => left + ((ts - domain.t0) / xSpan) * (right - left)
  const y = (v: number) => bottom - ((v - domain.vMin) / ySpan) * (bottom - top)

  const parts: string[] = []

  // y axis: min, mid, max gridlines with labels
  for (const v of [domain.vMin, (domain.vMin + domain.vMax) / 2, domain.vMax]) {
    const gy = y(v)
    parts.push(
      `<line x1="${left}" y1="${gy.toFixed(1)}" x2="${right}" y2="${gy.toFixed(1)}" class="grid"/>`,
      `<text x="${left - 6}" y="${(gy + 4).toFixed(1)}" text-anchor="end" class="axis">` +
        `${formatValue(v)}</text>`,
    )
  }
  // x axis: start, middle, end time labels
  for (const ts of [domain.t0, (domain.t0 + domain.t1) / 2, domain.t1]) {
    parts.push(
      `<text x="${x(ts).toFixed(1)}" y="${opts.height - 6}" text-anchor="middle" class="axis">` +
        `${formatTime(ts)}</text>`,
    )
  }

  frames.forEach((frame, i) => {
    const color = PALETTE[i % PALETTE.length]
    const runs = segments(frame.points)
    const shapes = runs.map((run) => {
      if (run.length === 1) {
        // an isolated point between gaps still has to be visible
        const p = run[0]
        return `<circle cx="${x(p.ts).toFixed(1)}" cy="${y(p.value).toFixed(1)}" r="2.5" fill="${color}" class="seg"/>`
      }
      const d = run
        .map((p, j) => `${j === 0 ? "M" : "L"}${x(p.ts).toFixed(1)} ${y(p.value).toFixed(1)}`)
        .join(" ")
      return `<path d="${d}" fill="none" stroke="${color}" stroke-width="1.6" class="seg"/>`
    })
    parts.push(
      `<g class="series" data-series="${escapeXml(frame.series)}" data-segments="${runs.length}">` +
        `${shapes.join("")}</g>`,
    )
  })

  if (opts.showLegend) {
    const items = frames.map((frame, i) => {
      const color = PALETTE[i % PALETTE.length]
      const ly = top + 12 + i * 14
      return (
        `<rect x="${left + 8}" y="${ly - 8}" width="10" height="3" fill="${color}"/>` +
        `<text x="${left + 22}" y="${ly - 4}" class="legend">${escapeXml(frame.series)}</text>`
      )
    })
    parts.push(`<g class="legend-box">${items.join("")}</g>`)
  }

  return wrapSvg(opts, parts.join(""))
}

/** STAT panels show the most recent non-null value per series. */
export function latestValues(frames: Frame[]): { series: string; value: number | null; ts: number | null }[] {
  return frames.map((frame) => {
    for (let i = frame.points.length - 1; i >= 0; i--) {
      const [ts, value] = frame.points[i]
      if (value !== null) return { series: frame.series, value, ts }
    }
    return { series: frame.series, value: null, ts: null }
  })
}

export function renderStat(frames: Frame[], options: Partial<ChartOptions> = {}): string {
  const opts = { ...DEFAULT_CHART, ...options }
  const latest = latestValues(frames).filter((row) => row.value !== null)
  if (!latest.length) {
    return renderNoData(options)
  }
  const rows = latest.map((row, i) => {
    const ry = 40 + i * 24
    return (
      `<text x="16" y="${ry}" class="stat-value">${formatValue(row.value as number)}</text>` +
      `<text x="110" y="${ry}" class="legend">${escapeXml(row.series)}</text>`
    )
  })
  return wrapSvg(opts, rows.join(""))
}
