import { describe, expect, it } from "vitest"

import {
  PALETTE,
  gapIntervals,
  latestValues,
  renderChart,
  renderNoData,
  renderStat,
  segments,
} from "../src/chart.js"
import type { Frame, Point } from "../src/types.js"

const SAMPLE_MS = 1000 // the daemon stores one sample per second when healthy

/** Build the frame the server contract dictates for a node with scripted
 * outage windows: a bucket is null exactly when it contains no stored
 * sample, and samples exist for every whole second outside the outages.
 */
function frameWithDowns(
  t0: number,
  t1: number,
  stepMs: number,
  downs: [number, number][],
): Frame {
  const points: Point[] = []
  for (let b = t0; b < t1; b += stepMs) {
    let hasSample = false
    for (let s = Math.ceil(b / SAMPLE_MS) * SAMPLE_MS; s < b + stepMs; s += SAMPLE_MS) {
      const inDown = downs.some(([d0, d1]) => s >= d0 && s < d1)
      if (!inDown) {
        hasSample = true
        break
      }
    }
    points.push([b, hasSample ? 42.0 : null])
  }
  return { series: "throughput_bytes_per_second{node=node2,tool=netdata}", points }
}

/** Independent arithmetic oracle: bucket starts that the outage forces
 * to null, i.e. buckets fully inside the down window. */
function mustNullBuckets(t0: number, t1: number, stepMs: number, down: [number, number]): number[] {
  const out: number[] = []
  for (let b = t0; b < t1; b += stepMs) {
    if (b >= down[0] && b + stepMs <= down[1]) out.push(b)
  }
  return out
}

describe("segments", () => {
  it("splits point runs at nulls", () => {
    const points: Point[] = [
      [0, 1.0],
      [10, 2.0],
      [20, null],
      [30, null],
      [40, 3.0],
    ]
    const runs = segments(points)
    expect(runs.length).toBe(2)
    expect(runs[0].map((p) => p.ts)).toEqual([0, 10])
    expect(runs[1].map((p) => p.ts)).toEqual([40])
  })

  it("handles all-null and empty inputs", () => {
    expect(segments([])).toEqual([])
    expect(segments([[0, null], [10, null]])).toEqual([])
  })
})

describe("gapIntervals", () => {
  it("returns half-open extents, one step past the last null bucket", () => {
    const points: Point[] = [
      [0, 1.0],
      [10, null],
      [20, null],
      [30, 2.0],
    ]
    expect(gapIntervals(points, 10)).toEqual([[10, 30]])
  })

  it("covers leading and trailing gaps", () => {
    const points: Point[] = [
      [0, null],
      [10, 1.0],
      [20, null],
    ]
    expect(gapIntervals(points, 10)).toEqual([[0, 10], [20, 30]])
  })

  it("is empty when nothing is null", () => {
    expect(gapIntervals([[0, 1.0], [10, 2.0]], 10)).toEqual([])
  })
})

describe("gap fidelity against the outage schedule", () => {
  it("renders an aligned down window as a break of exactly its extent", () => {
    const step = 10_000
    const down: [number, number] = [60_000, 120_000]
    const frame = frameWithDowns(0, 600_000, step, [down])

    const must = mustNullBuckets(0, 600_000, step, down)
    expect(must.length).toBeGreaterThan(0)
    for (const b of must) {
      const point = frame.points.find(([ts]) => ts === b)
      expect(point?.[1]).toBeNull()
    }

    const gaps = gapIntervals(frame.points, step)
    expect(gaps.length).toBe(1)
    const [gapStart, gapEnd] = gaps[0]
    expect(Math.abs(gapStart - down[0])).toBeLessThan(step)
    expect(Math.abs(gapEnd - down[1])).toBeLessThan(step)
  })

  it("stays within one step of an unaligned down window", () => {
    const step = 10_000
    const down: [number, number] = [65_000, 115_000]
    const frame = frameWithDowns(0, 600_000, step, [down])

    const gaps = gapIntervals(frame.points, step)
    expect(gaps.length).toBe(1)
    const [gapStart, gapEnd] = gaps[0]
    // edge buckets keep their partial data, so the break sits inside the
    // outage, never more than one step away from either edge
    expect(gapStart).toBeGreaterThanOrEqual(down[0])
    expect(gapEnd).toBeLessThanOrEqual(down[1] + step)
    expect(Math.abs(gapStart - down[0])).toBeLessThan(step)
    expect(Math.abs(gapEnd - down[1])).toBeLessThan(step)
  })

  it("the rendered SVG carries the break as separate segments", () => {
    const step = 10_000
    const frame = frameWithDowns(0, 600_000, step, [[60_000, 120_000]])
    const svg = renderChart([frame], { t0: 0, t1: 600_000 })

    const group = svg.match(/<g class="series"[^>]*>/)?.[0] ?? ""
    expect(group).toContain('data-segments="2"')
    const segCount = (svg.match(/class="seg"/g) ?? []).length
    expect(segCount).toBe(2)
  })
})

describe("renderChart", () => {
  const flat = (series: string, value: number): Frame => ({
    series,
    points: [
      [0, value],
      [10_000, value + 1],
      [20_000, value + 2],
    ],
  })

  it("never draws a line across a gap", () => {
    const frame: Frame = {
      series: "m",
      points: [
        [0, 1.0],
        [10_000, 1.0],
        [20_000, null],
        [30_000, 2.0],
        [40_000, 2.0],
      ],
    }
    const svg = renderChart([frame], { t0: 0, t1: 50_000 })
    const paths = [...svg.matchAll(/<path d="([^"]+)"[^>]*class="seg"/g)].map((m) => m[1])
    expect(paths.length).toBe(2)
    for (const d of paths) {
      // each segment path holds exactly its own two points
      expect((d.match(/[ML]/g) ?? []).length).toBe(2)
    }
  })

  it("renders an isolated point between gaps as a visible marker", () => {
    const frame: Frame = {
      series: "m",
      points: [
        [0, null],
        [10_000, 5.0],
        [20_000, null],
      ],
    }
    const svg = renderChart([frame])
    expect(svg).toContain("<circle")
    expect(svg).toContain('data-segments="1"')
  })

  it("gives five series five distinguishable colors and legend entries", () => {
    const frames = ["node1", "node2", "node3", "node4", "node5"].map((node, i) =>
      flat(`throughput_bytes_per_second{node=${node},tool=netdata}`, i * 10),
    )
    const svg = renderChart(frames)
    const strokes = new Set([...svg.matchAll(/stroke="(#[0-9a-f]+)"/g)].map((m) => m[1]))
    expect(strokes.size).toBe(5)
    for (const frame of frames) {
      expect(svg).toContain(frame.series.replace(/&/g, "&amp;"))
    }
    expect(PALETTE.length).toBeGreaterThanOrEqual(12)
  })

  it("shows a no-data state instead of a blank panel", () => {
    expect(renderChart([])).toContain("no data")
    expect(renderChart([{ series: "m", points: [[0, null]] }])).toContain("no data")
    expect(renderNoData()).toContain("no data")
  })

  it("handles a flat series without dividing by zero", () => {
    const frame: Frame = { series: "m", points: [[0, 7.0], [10_000, 7.0]] }
    const svg = renderChart([frame])
    expect(svg).toContain("<path")
    expect(svg).not.toContain("NaN")
  })
})

describe("stat rendering", () => {
  it("shows the most recent non-null value per series", () => {
    const frames: Frame[] = [
      { series: "a", points: [[0, 1.5], [10, 2.5], [20, null]] },
      { series: "b", points: [[0, null], [10, null], [20, null]] },
    ]
    const latest = latestValues(frames)
    expect(latest[0]).toEqual({ series: "a", value: 2.5, ts: 10 })
    expect(latest[1]).toEqual({ series: "b", value: null, ts: null })

    const svg = renderStat(frames)
    expect(svg).toContain("2.5")
  })

  it("falls back to no data when every series is null", () => {
    const frames: Frame[] = [{ series: "a", points: [[0, null]] }]
    expect(renderStat(frames)).toContain("no data")
  })
})
