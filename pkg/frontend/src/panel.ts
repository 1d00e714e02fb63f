/** Panel body markup: chart, stat, loading, no-data, error, stale badge.
 *
 * The rule that matters: a panel never goes blank silently. A failed
 * refresh keeps the last good chart and pins a stale badge with the
 * last-success time; a panel with no data yet says so in words.
 */

import { renderChart, renderNoData, renderStat } from "./chart.js"
import type { Frame, PanelSpec } from "./types.js"

export interface PanelView {
  spec: PanelSpec
  /** last good result; kept across failed refreshes */
  frames: Frame[] | null
  error: string | null
  lastSuccessMs: number | null
  loading: boolean
  /** x domain of the last query, so the chart axis matches the range asked for */
  t0: number | null
  t1: number | null
}

export function newPanelView(spec: PanelSpec): PanelView {
  return { spec, frames: null, error: null, lastSuccessMs: null, loading: true, t0: null, t1: null }
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
}

export function staleBadge(view: PanelView): string {
  const since = view.lastSuccessMs === null ? "never" : new Date(view.lastSuccessMs).toISOString()
  return `<div class="stale-badge" title="${escapeHtml(view.error ?? "")}">stale, last success ${escapeHtml(since)}</div>`
}

export function renderPanelBody(view: PanelView): string {
  const parts: string[] = []

  if (view.error !== null && view.frames !== null) {
    // transient failure after good data: keep the chart, badge it
    parts.push(staleBadge(view))
  }

  if (view.frames === null) {
    if (view.error !== null) {
      parts.push(`<div class="panel-error">error: ${escapeHtml(view.error)}</div>`)
    } else if (view.loading) {
      parts.push(`<div class="panel-loading">loading</div>`)
    } else {
      parts.push(renderNoData())
    }
    return parts.join("")
  }

  if (view.frames.length === 0) {
    parts.push(renderNoData())
    return parts.join("")
  }

  const opts = { t0: view.t0 ?? undefined, t1: view.t1 ?? undefined }
  if (view.spec.render === "STAT") {
    parts.push(renderStat(view.frames, opts))
  } else {
    parts.push(renderChart(view.frames, opts))
  }
  return parts.join("")
}
