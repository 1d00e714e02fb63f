import { describe, expect, it } from "vitest"

import { RefreshLoop, Scheduler, VisibilityGate } from "../src/refresh.js"

const flush = () => new Promise<void>((resolve) => setTimeout(resolve, 0))

class ManualScheduler implements Scheduler {
  private t = 0
  private seq = 1
  private timers = new Map<number, { at: number; fn: () => void }>()

  now(): number {
    return this.t
  }

  setTimeout(fn: () => void, delayMs: number): number {
    const id = this.seq++
    this.timers.set(id, { at: this.t + delayMs, fn })
    return id
  }

  clearTimeout(id: number): void {
    this.timers.delete(id)
  }

  /** Run every timer due within the next `ms`, in order, flushing
   * promise callbacks after each so task completions land in time.
   * Also flushes once up front: in real time, completions of work
   * started before this window always land before the next tick. */
  async advance(ms: number): Promise<void> {
    const target = this.t + ms
    await flush()
    for (;;) {
      let nextId: number | null = null
      let nextAt = Infinity
      for (const [id, timer] of this.timers) {
        if (timer.at <= target && timer.at < nextAt) {
          nextAt = timer.at
          nextId = id
        }
      }
      if (nextId === null) break
      const timer = this.timers.get(nextId)!
      this.timers.delete(nextId)
      this.t = timer.at
      timer.fn()
      await flush()
    }
    this.t = target
  }
}

interface Deferred {
  promise: Promise<void>
  resolve: () => void
  reject: (err: Error) => void
}

function deferred(): Deferred {
  let resolve!: () => void
  let reject!: (err: Error) => void
  const promise = new Promise<void>((res, rej) => {
    resolve = res
    reject = rej
  })
  return { promise, resolve, reject }
}

describe("refresh cadence bound", () => {
  it("a 5 s loop makes at most 12 requests in any 60 s window", async () => {
    const sched = new ManualScheduler()
    const times: number[] = []
    const loop = new RefreshLoop({
      intervalMs: 5000,
      scheduler: sched,
      task: async () => {
        times.push(sched.now())
      },
    })
    loop.start()
    await sched.advance(59_999)

    const inWindow = times.filter((t) => t < 60_000)
    expect(inWindow.length).toBeLessThanOrEqual(12)
    expect(inWindow.length).toBe(12) // it actually refreshes, not just rarely
    expect(loop.stats.requests).toBe(12)
    loop.stop()
  })

  it("fires the first request immediately so panels paint at once", async () => {
    const sched = new ManualScheduler()
    const times: number[] = []
    const loop = new RefreshLoop({
      intervalMs: 5000,
      scheduler: sched,
      task: async () => {
        times.push(sched.now())
      },
    })
    loop.start()
    await flush()
    expect(times).toEqual([0])
    loop.stop()
  })

  it("can defer the first request by one interval when asked", async () => {
    const sched = new ManualScheduler()
    const times: number[] = []
    const loop = new RefreshLoop({
      intervalMs: 5000,
      scheduler: sched,
      immediate: false,
      task: async () => {
        times.push(sched.now())
      },
    })
    loop.start()
    await flush()
    expect(times).toEqual([])
    await sched.advance(5000)
    expect(times).toEqual([5000])
    loop.stop()
  })

  it("rejects refresh intervals below the 1000 ms floor", () => {
    expect(
      () => new RefreshLoop({ intervalMs: 999, task: async () => {} }),
    ).toThrow(/1000/)
  })
})

describe("in-flight suppression", () => {
  it("skips ticks while a request is outstanding and never overlaps", async () => {
    const sched = new ManualScheduler()
    let active = 0
    let maxActive = 0
    let gate = deferred()
    const loop = new RefreshLoop({
      intervalMs: 5000,
      scheduler: sched,
      task: () => {
        active += 1
        maxActive = Math.max(maxActive, active)
        return gate.promise.then(() => {
          active -= 1
        })
      },
    })
    loop.start()
    await flush()
    expect(loop.stats.requests).toBe(1)

    // four ticks pass while the first request hangs
    await sched.advance(20_000)
    expect(loop.stats.requests).toBe(1)
    expect(loop.stats.suppressedInFlight).toBe(4)

    const firstGate = gate
    gate = deferred()
    firstGate.resolve()
    await flush()
    await sched.advance(5000)
    expect(loop.stats.requests).toBe(2)
    expect(maxActive).toBe(1)

    gate.resolve()
    await flush()
    loop.stop()
  })
})

describe("hidden-tab pause", () => {
  it("makes zero requests while hidden and resumes within one interval", async () => {
    const sched = new ManualScheduler()
    let hidden = true
    const gate: VisibilityGate = { hidden: () => hidden }
    const loop = new RefreshLoop({
      intervalMs: 5000,
      scheduler: sched,
      visibility: gate,
      task: async () => {},
    })
    loop.start()
    await sched.advance(60_000)
    expect(loop.stats.requests).toBe(0)
    expect(loop.stats.skippedHidden).toBeGreaterThan(0)

    hidden = false
    await sched.advance(5000)
    expect(loop.stats.requests).toBe(1)
    loop.stop()
  })
})

describe("failure handling", () => {
  it("keeps the last success time and flags staleness until recovery", async () => {
    const sched = new ManualScheduler()
    let fail = false
    const loop = new RefreshLoop({
      intervalMs: 5000,
      scheduler: sched,
      task: async () => {
        if (fail) throw new Error("connection refused")
      },
    })
    loop.start()
    await flush()
    expect(loop.stats.lastSuccessMs).toBe(0)
    expect(loop.isStale).toBe(false)

    fail = true
    await sched.advance(5000)
    expect(loop.stats.failures).toBe(1)
    expect(loop.stats.lastError).toContain("connection refused")
    expect(loop.stats.lastSuccessMs).toBe(0) // unchanged by the failure
    expect(loop.isStale).toBe(true)

    fail = false
    await sched.advance(5000)
    expect(loop.stats.lastError).toBeNull()
    expect(loop.stats.lastSuccessMs).toBe(10_000)
    expect(loop.isStale).toBe(false)
    loop.stop()
  })

  it("stop() cancels future ticks", async () => {
    const sched = new ManualScheduler()
    const loop = new RefreshLoop({
      intervalMs: 5000,
      scheduler: sched,
      task: async () => {},
    })
    loop.start()
    await flush()
    loop.stop()
    await sched.advance(30_000)
    expect(loop.stats.requests).toBe(1)
  })
})
