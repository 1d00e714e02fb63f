/** Admin collector form: client-side validation mirroring the server's
 * collector rules, and the submit flow with its error mapping.
 *
 * The form is only rendered for admin sessions; the 403 branch below is
 * defense in depth for a stale role, not a path viewers normally reach.
 */

import { ApiClient, ApiError, CollectorSpecWire } from "./api.js"
import type { Role } from "./types.js"

export const TOOLS = ["prometheus", "netdata", "ntopng", "perfsonar", "zabbix"] as const

export interface CollectorFormFields {
  id: string
  tool: string
  host: string
  port: string
  nodeLabel: string
  intervalMs: string
  timeoutMs: string
  username: string
  password: string
  optionsJson: string
}

export const EMPTY_FORM: CollectorFormFields = {
  id: "",
  tool: "netdata",
  host: "",
  port: "",
  nodeLabel: "",
  intervalMs: "10000",
  timeoutMs: "5000",
  username: "",
  password: "",
  optionsJson: "",
}

export type FieldErrors = Partial<Record<keyof CollectorFormFields, string>>

export function adminControlsVisible(role: Role | null): boolean {
  return role === "admin"
}

const intField = (raw: string): number | null => {
  if (!/^\d+$/.test(raw.trim())) return null
  return Number(raw.trim())
}

/** Same rules the server enforces, so a clean form round-trips as a 201. */
export function validateForm(fields: CollectorFormFields): FieldErrors {
  const errors: FieldErrors = {}
  if (!fields.id.trim()) {
    errors.id = "id must be non-empty"
  }
  if (!(TOOLS as readonly string[]).includes(fields.tool)) {
    errors.tool = `tool must be one of ${TOOLS.join(", ")}`
  }
  if (!fields.host.trim()) {
    errors.host = "host must be non-empty"
  }
  const port = intField(fields.port)
  if (port === null || port < 1 || port > 65535) {
    errors.port = "port must be an integer in 1..65535"
  }
  if (!fields.nodeLabel.trim()) {
    errors.nodeLabel = "node label must be non-empty"
  }
  const interval = intField(fields.intervalMs)
  const timeout = intField(fields.timeoutMs)
  if (interval === null || interval <= 0) {
    errors.intervalMs = "interval_ms must be a positive integer"
  }
  if (timeout === null || timeout <= 0) {
    errors.timeoutMs = "timeout_ms must be a positive integer"
  } else if (interval !== null && timeout >= interval) {
    errors.timeoutMs = "timeout_ms must be < interval_ms"
  }
  if ((fields.username && !fields.password) || (!fields.username && fields.password)) {
    errors.password = "credentials need both username and password"
  }
  if (fields.optionsJson.trim()) {
    try {
      const parsed = JSON.parse(fields.optionsJson)
      if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
        errors.optionsJson = "options must be a JSON object"
      }
    } catch {
      errors.optionsJson = "options must be valid JSON"
    }
  }
  return errors
}

export function toWireSpec(fields: CollectorFormFields): CollectorSpecWire {
  const spec: CollectorSpecWire = {
    id: fields.id.trim(),
    tool: fields.tool,
    host: fields.host.trim(),
    port: Number(fields.port),
    node_label: fields.nodeLabel.trim(),
    interval_ms: Number(fields.intervalMs),
    timeout_ms: Number(fields.timeoutMs),
  }
  if (fields.username && fields.password) {
    spec.credentials = { username: fields.username, password: fields.password }
  }
  if (fields.optionsJson.trim()) {
    spec.options = JSON.parse(fields.optionsJson) as Record<string, unknown>
  }
  return spec
}

export type SubmitResult =
  | { ok: true; id: string }
  | { ok: false; errors: FieldErrors; formError: string | null }

/** Validate, post, and fold server rejections back into form errors.
 * On success the caller refreshes the node picker and metric catalog. */
export async function submitCollector(
  api: ApiClient,
  fields: CollectorFormFields,
): Promise<SubmitResult> {
  const errors = validateForm(fields)
  if (Object.keys(errors).length) {
    return { ok: false, errors, formError: null }
  }
  try {
    const id = await api.addCollector(toWireSpec(fields))
    return { ok: true, id }
  } catch (err) {
    if (err instanceof ApiError) {
      if (err.status === 409) {
        return { ok: false, errors: { id: "a collector with this id already exists" }, formError: null }
      }
      if (err.status === 403) {
        return { ok: false, errors: {}, formError: "this token does not have admin rights" }
      }
      if (err.status === 400) {
        return { ok: false, errors: {}, formError: err.message }
      }
    }
    return {
      ok: false,
      errors: {},
      formError: err instanceof Error ? err.message : String(err),
    }
  }
}
