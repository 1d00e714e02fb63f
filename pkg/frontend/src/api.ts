/** HTTP client for the daemon's query service.
 *
 * Every request this dashboard ever makes goes through this module, and
 * every path it can touch is listed in ROUTES. The fetch function is
 * injectable so tests can record traffic and script responses.
 */

import type { Frame, MetricInfo, NodeInfo, QueryRangeRequest, Role } from "./types.js"

export const ROUTES = {
  health: "/",
  nodes: "/api/v1/nodes",
  metrics: "/api/v1/metrics",
  queryRange: "/api/v1/query_range",
  adminCollectors: "/api/v1/admin/collectors",
} as const

export type FetchLike = (url: string, init: RequestInit) => Promise<Response>

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    message: string,
  ) {
    super(message)
  }
}

export interface CollectorSpecWire {
  id: string
  tool: string
  host: string
  port: number
  node_label: string
  interval_ms: number
  timeout_ms: number
  path?: string
  credentials?: { username: string; password: string }
  options?: Record<string, unknown>
}

async function errorFrom(resp: Response): Promise<ApiError> {
  let kind = "HttpError"
  let message = `HTTP ${resp.status}`
  try {
    const body = (await resp.json()) as { error?: string; message?: string }
    if (body.error) kind = body.error
    if (body.message) message = body.message
  } catch {
    // non-JSON error body, keep the status-line message
  }
  return new ApiError(resp.status, kind, message)
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const init: RequestInit = {
      method,
      headers: { Authorization: `Bearer ${this.token}` },
    }
    if (body !== undefined) {
      init.headers = { ...init.headers, "Content-Type": "application/json" }
      init.body = JSON.stringify(body)
    }
    const resp = await this.fetchFn(this.baseUrl + path, init)
    if (!resp.ok) {
      throw await errorFrom(resp)
    }
    return resp.json()
  }

  async nodes(): Promise<NodeInfo[]> {
    const body = (await this.request("GET", ROUTES.nodes)) as { nodes: NodeInfo[] }
    return body.nodes
  }

  async metrics(): Promise<MetricInfo[]> {
    const body = (await this.request("GET", ROUTES.metrics)) as { metrics: MetricInfo[] }
    return body.metrics
  }

  async queryRange(req: QueryRangeRequest): Promise<Frame[]> {
    const body = (await this.request("POST", ROUTES.queryRange, {
      selector: req.selector,
      t0: req.t0,
      t1: req.t1,
      step_ms: req.stepMs,
      agg: req.agg,
    })) as { frames: Frame[] }
    return body.frames
  }

  async addCollector(spec: CollectorSpecWire): Promise<string> {
    const body = (await this.request("POST", ROUTES.adminCollectors, spec)) as { id: string }
    return body.id
  }

  async disableCollector(id: string): Promise<void> {
    await this.request("DELETE", `${ROUTES.adminCollectors}/${encodeURIComponent(id)}`)
  }

  /** Confirm the token works at all: 401 means it does not. */
  async tokenValid(): Promise<boolean> {
    try {
      await this.request("GET", ROUTES.nodes)
      return true
    } catch (err) {
      if (err instanceof ApiError && err.status === 401) return false
      throw err
    }
  }

  /** Probe the token's role with one deliberately invalid admin POST.
   *
   * The empty spec can never validate, so the server mutates nothing in
   * either role: admins get the 400 from spec validation, viewers are
   * stopped at the 403 role gate before the body is even parsed. This is
   * the only admin-route request a viewer session ever produces.
   */
  async probeRole(): Promise<Role | null> {
    try {
      await this.request("POST", ROUTES.adminCollectors, {})
      throw new Error("empty collector spec unexpectedly accepted")
    } catch (err) {
      if (err instanceof ApiError) {
        if (err.status === 400) return "admin"
        if (err.status === 403) return "viewer"
        if (err.status === 401) return null
      }
      throw err
    }
  }
}
