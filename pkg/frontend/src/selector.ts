/** Client-side mirror of the daemon's selector grammar.
 *
 * Forms:
 *     *                          every series
 *     name                       metric name, '*' wildcards allowed
 *     name{k=v,k2=v2}            metric name plus exact label matchers
 *     {k=v}                      label matchers over any metric
 *
 * Panels validate their selector before the first query so a typo shows
 * up as a form error, not a 400 on every refresh tick.
 */

const PATTERN_RE = /^[a-z0-9_*]+$/
const LABEL_RE = /^[a-z_][a-z0-9_]*$/

export class InvalidSelector extends Error {}

export interface Selector {
  metricPattern: string | null
  matchers: [string, string][]
}

export function parseSelector(text: string): Selector {
  const trimmed = text.trim()
  if (!trimmed) {
    throw new InvalidSelector("empty selector")
  }
  if (trimmed === "*") {
    return { metricPattern: null, matchers: [] }
  }

  const braceAt = trimmed.indexOf("{")
  const namePart = (braceAt < 0 ? trimmed : trimmed.slice(0, braceAt)).trim()
  const matchers: [string, string][] = []

  if (braceAt >= 0) {
    if (!trimmed.endsWith("}")) {
      throw new InvalidSelector(`unbalanced braces in ${JSON.stringify(trimmed)}`)
    }
    const inner = trimmed.slice(braceAt + 1, -1).trim()
    if (inner) {
      for (const part of inner.split(",")) {
        const eq = part.indexOf("=")
        if (eq < 0) {
          throw new InvalidSelector(`bad matcher ${JSON.stringify(part)}`)
        }
        const key = part.slice(0, eq).trim()
        const value = part.slice(eq + 1).trim().replace(/^"|"$/g, "")
        if (!value) {
          throw new InvalidSelector(`bad matcher ${JSON.stringify(part)}`)
        }
        if (!LABEL_RE.test(key)) {
          throw new InvalidSelector(`bad label name ${JSON.stringify(key)}`)
        }
        matchers.push([key, value])
      }
    }
  }

  if (!namePart) {
    if (matchers.length === 0) {
      throw new InvalidSelector(`selector ${JSON.stringify(trimmed)} matches nothing specific`)
    }
    return { metricPattern: null, matchers }
  }
  if (!PATTERN_RE.test(namePart)) {
    throw new InvalidSelector(`bad metric pattern ${JSON.stringify(namePart)}`)
  }
  return { metricPattern: namePart, matchers }
}

/** Compose a selector from a metric name and an optional node filter. */
export function composeSelector(metric: string, node: string | null): string {
  return node ? `${metric}{node=${node}}` : metric
}
