/** DOM wiring. Everything testable lives in the other modules; this file
 * only binds them to the page.
 */

import { ApiClient } from "./api.js"
import { EMPTY_FORM, adminControlsVisible, submitCollector, validateForm } from "./form.js"
import { newPanelView, renderPanelBody, PanelView } from "./panel.js"
import { RefreshLoop, VisibilityGate } from "./refresh.js"
import { composeSelector, parseSelector } from "./selector.js"
import { Dashboard, resolveRange } from "./state.js"
import type { CollectorFormFields } from "./form.js"
import type { NodeInfo } from "./types.js"

const TOKEN_KEY = "netgraf_token"
const NODE_REFRESH_MS = 10_000

const pageVisibility: VisibilityGate = { hidden: () => document.hidden }

function apiBase(): string {
  const param = new URLSearchParams(location.search).get("api")
  return (param ?? "http://127.0.0.1:8686").replace(/\/$/, "")
}

function getToken(): string {
  let token = sessionStorage.getItem(TOKEN_KEY)
  if (!token) {
    token = prompt("netgraf API token") ?? ""
    sessionStorage.setItem(TOKEN_KEY, token)
  }
  return token
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag)
  if (className) node.className = className
  if (text !== undefined) node.textContent = text
  return node
}

interface PanelBinding {
  view: PanelView
  body: HTMLElement
  loop: RefreshLoop
}

class App {
  private readonly dash = new Dashboard()
  private readonly bindings: PanelBinding[] = []
  private nodes: NodeInfo[] = []

  constructor(private readonly api: ApiClient) {}

  async start(): Promise<void> {
    const role = await this.api.probeRole()
    if (role === null) {
      sessionStorage.removeItem(TOKEN_KEY)
      document.body.textContent = "token rejected, reload to retry"
      return
    }
    this.dash.role = role
    this.renderHeader()
    this.renderPanels()
    this.startNodeLoop()
    if (adminControlsVisible(role)) {
      this.renderAdminForm()
    }
  }

  private renderHeader(): void {
    const header = document.querySelector("header")!
    header.querySelector(".role-badge")?.remove()
    const badge = el("span", "role-badge", this.dash.role ?? "")
    header.appendChild(badge)

    const rangeSel = document.getElementById("range") as HTMLSelectElement
    rangeSel.onchange = () => {
      const hours = Number(rangeSel.value)
      this.dash.setRange({ kind: "relative", lastMs: hours * 3_600_000 })
    }
    const nodeSel = document.getElementById("node-filter") as HTMLSelectElement
    nodeSel.onchange = () => {
      this.dash.nodeFilter = nodeSel.value || null
      this.rebuildSelectors()
    }
  }

  private rebuildSelectors(): void {
    for (const binding of this.bindings) {
      const parsed = parseSelector(binding.view.spec.selector)
      const metric = parsed.metricPattern ?? "*"
      binding.view.spec = {
        ...binding.view.spec,
        selector: composeSelector(metric, this.dash.nodeFilter),
      }
    }
  }

  private renderPanels(): void {
    const grid = document.getElementById("grid")!
    grid.textContent = ""
    for (const spec of this.dash.panels) {
      const view = newPanelView(spec)
      const card = el("div", "panel")
      const head = el("div", "panel-header")
      head.appendChild(el("span", "title", spec.title))
      card.appendChild(head)
      const body = el("div", "panel-body")
      card.appendChild(body)
      grid.appendChild(card)

      const loop: RefreshLoop = new RefreshLoop({
        intervalMs: spec.refreshMs,
        visibility: pageVisibility,
        task: async () => {
          const { t0, t1 } = resolveRange(this.dash.range, Date.now())
          const frames = await this.api.queryRange({
            selector: view.spec.selector,
            t0,
            t1,
            stepMs: view.spec.stepMs,
            agg: view.spec.agg,
          })
          view.frames = frames
          view.t0 = t0
          view.t1 = t1
          view.lastSuccessMs = Date.now()
          view.loading = false
        },
        onSettled: () => {
          view.error = loop.stats.lastError
          if (view.error !== null) view.loading = false
          body.innerHTML = renderPanelBody(view)
        },
      })
      this.bindings.push({ view, body, loop })
      loop.start()
    }
  }

  private startNodeLoop(): void {
    const picker = document.getElementById("node-filter") as HTMLSelectElement
    const loop = new RefreshLoop({
      intervalMs: NODE_REFRESH_MS,
      visibility: pageVisibility,
      task: async () => {
        this.nodes = await this.api.nodes()
      },
      onSettled: () => {
        const current = picker.value
        picker.textContent = ""
        picker.appendChild(new Option("all nodes", ""))
        for (const info of this.nodes) {
          const label = info.stale ? `${info.node} (stale)` : info.node
          picker.appendChild(new Option(label, info.node))
        }
        picker.value = current
      },
    })
    loop.start()
  }

  private renderAdminForm(): void {
    const host = document.getElementById("admin")!
    host.classList.remove("hidden")
    const form = host.querySelector("form") as HTMLFormElement
    const status = host.querySelector(".form-status") as HTMLElement
    form.onsubmit = async (event) => {
      event.preventDefault()
      const data = new FormData(form)
      const fields: CollectorFormFields = {
        ...EMPTY_FORM,
        id: String(data.get("id") ?? ""),
        tool: String(data.get("tool") ?? ""),
        host: String(data.get("host") ?? ""),
        port: String(data.get("port") ?? ""),
        nodeLabel: String(data.get("node_label") ?? ""),
        intervalMs: String(data.get("interval_ms") ?? ""),
        timeoutMs: String(data.get("timeout_ms") ?? ""),
        optionsJson: String(data.get("options") ?? ""),
      }
      const localErrors = validateForm(fields)
      if (Object.keys(localErrors).length) {
        status.textContent = Object.values(localErrors).join("; ")
        return
      }
      const result = await submitCollector(this.api, fields)
      if (result.ok) {
        status.textContent = `added ${result.id}`
        form.reset()
      } else {
        status.textContent =
          result.formError ?? Object.values(result.errors).join("; ")
      }
    }
  }
}

const app = new App(new ApiClient(apiBase(), getToken()))
void app.start()
