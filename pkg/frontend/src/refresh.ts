/** Per-panel auto-refresh loop.
 *
 * Fixed cadence: ticks land on start + n * intervalMs, never rescheduled
 * from task completion, so the request count over any window has a hard
 * arithmetic bound. A tick is skipped (not queued) when the previous
 * request is still in flight or the tab is hidden; skipped ticks are
 * never made up, which is what keeps slow servers from causing pile-up.
 */

export interface Scheduler {
  now(): number
  setTimeout(fn: () => void, delayMs: number): number
  clearTimeout(id: number): void
}

export const realScheduler: Scheduler = {
  now: () => Date.now(),
  setTimeout: (fn, delayMs) => globalThis.setTimeout(fn, delayMs) as unknown as number,
  clearTimeout: (id) => globalThis.clearTimeout(id),
}

export interface VisibilityGate {
  hidden(): boolean
}

export const alwaysVisible: VisibilityGate = { hidden: () => false }

export interface RefreshStats {
  requests: number
  successes: number
  failures: number
  suppressedInFlight: number
  skippedHidden: number
  lastSuccessMs: number | null
  lastError: string | null
}

export interface RefreshLoopOptions {
  intervalMs: number
  task: () => Promise<void>
  scheduler?: Scheduler
  visibility?: VisibilityGate
  /** fire the first tick at start() instead of one interval later */
  immediate?: boolean
  onSettled?: () => void
}

export class RefreshLoop {
  readonly stats: RefreshStats = {
    requests: 0,
    successes: 0,
    failures: 0,
    suppressedInFlight: 0,
    skippedHidden: 0,
    lastSuccessMs: null,
    lastError: null,
  }

  private readonly intervalMs: number
  private readonly task: () => Promise<void>
  private readonly scheduler: Scheduler
  private readonly visibility: VisibilityGate
  private readonly immediate: boolean
  private readonly onSettled: () => void

  private running = false
  private inFlight = false
  private timerId: number | null = null

  constructor(opts: RefreshLoopOptions) {
    if (opts.intervalMs < 1000) {
      throw new Error(`refresh interval ${opts.intervalMs} below the 1000 ms floor`)
    }
    this.intervalMs = opts.intervalMs
    this.task = opts.task
    this.scheduler = opts.scheduler ?? realScheduler
    this.visibility = opts.visibility ?? alwaysVisible
    this.immediate = opts.immediate ?? true
    this.onSettled = opts.onSettled ?? (() => {})
  }

  start(): void {
    if (this.running) return
    this.running = true
    if (this.immediate) {
      this.tick()
    } else {
      this.schedule()
    }
  }

  stop(): void {
    this.running = false
    if (this.timerId !== null) {
      this.scheduler.clearTimeout(this.timerId)
      this.timerId = null
    }
  }

  get isStale(): boolean {
    return this.stats.lastError !== null
  }

  private schedule(): void {
    this.timerId = this.scheduler.setTimeout(() => this.tick(), this.intervalMs)
  }

  private tick(): void {
    if (!this.running) return
    this.schedule()
    if (this.visibility.hidden()) {
      this.stats.skippedHidden += 1
      return
    }
    if (this.inFlight) {
      this.stats.suppressedInFlight += 1
      return
    }
    this.inFlight = true
    this.stats.requests += 1
    this.task().then(
      () => {
        this.inFlight = false
        this.stats.successes += 1
        this.stats.lastSuccessMs = this.scheduler.now()
        this.stats.lastError = null
        this.onSettled()
      },
      (err: unknown) => {
        this.inFlight = false
        this.stats.failures += 1
        this.stats.lastError = err instanceof Error ? err.message : String(err)
        this.onSettled()
      },
    )
  }
}
