import { describe, expect, it } from "vitest";

import {
  ConsoleCore,
  TimerHost,
  Transport,
  clampRate,
  normalizeForDisplay,
} from "../src/core.js";
import { layoutLines } from "../src/charts.js";
import { ClientMessage, parseTelemetry } from "../src/protocol.js";

class FakeTimers implements TimerHost {
  now = 0;
  private queue: Array<{ at: number; fn: () => void; id: number }> = [];
  private next = 1;

  setTimeout(fn: () => void, ms: number): unknown {
    const id = this.next++;
    this.queue.push({ at: this.now + ms, fn, id });
    return id;
  }

  clearTimeout(handle: unknown): void {
    this.queue = this.queue.filter((t) => t.id !== handle);
  }

  advance(ms: number): void {
    const end = this.now + ms;
    for (;;) {
      this.queue.sort((a, b) => a.at - b.at);
      const head = this.queue[0];
      if (!head || head.at > end) break;
      this.now = head.at;
      this.queue.shift();
      head.fn();
    }
    this.now = end;
  }
}

class SpyTransport implements Transport {
  sent: ClientMessage[] = [];
  closed = false;

  send(msg: ClientMessage): void {
    this.sent.push(msg);
  }

  close(): void {
    this.closed = true;
  }

  ofType(type: string): ClientMessage[] {
    return this.sent.filter((m) => m.type === type);
  }
}

function makeCore() {
  const timers = new FakeTimers();
  const transport = new SpyTransport();
  const core = new ConsoleCore(transport, { timers, slider: 2.0 });
  return { core, transport, timers };
}

describe("slider debounce", () => {
  it("a drag burst produces exactly one set_rate with the final value", () => {
    const { core, transport, timers } = makeCore();
    for (const v of [2.2, 2.9, 3.7, 4.6, 5.4, 6.0]) {
      core.setSlider(v);
      timers.advance(20);
    }
    expect(transport.ofType("set_rate")).toHaveLength(0); // still inside the window
    timers.advance(100);
    const sent = transport.ofType("set_rate");
    expect(sent).toHaveLength(1);
    expect(sent[0]).toEqual({ type: "set_rate", sps: 6.0 });
  });

  it("two separated drags produce two messages", () => {
    const { core, transport, timers } = makeCore();
    core.setSlider(3.0);
    timers.advance(150);
    core.setSlider(5.0);
    timers.advance(150);
    expect(transport.ofType("set_rate")).toHaveLength(2);
  });

  it("clamps to the 1..7 operating range", () => {
    const { core, transport, timers } = makeCore();
    core.setSlider(11.0);
    timers.advance(150);
    expect(transport.ofType("set_rate")[0]).toEqual({ type: "set_rate", sps: 7.0 });
    expect(clampRate(0.2)).toBe(1.0);
  });
});

describe("text streaming", () => {
  it("dispatches words at the chosen rate with a visible cursor", () => {
    const { core, transport, timers } = makeCore();
    core.streamText(["a", "b", "c", "d"], 10); // 100 ms apart
    expect(transport.ofType("text")).toHaveLength(1); // first goes immediately
    expect(core.state.wordsSent).toBe(1);
    expect(core.state.wordsPending).toBe(3);
    timers.advance(100);
    expect(core.state.wordsSent).toBe(2);
    timers.advance(1000);
    expect(core.state.wordsSent).toBe(4);
    expect(core.state.wordsPending).toBe(0);
  });

  it("end_text flushes whatever is still queued", () => {
    const { core, transport } = makeCore();
    core.streamText(["x", "y", "z"], 1);
    core.endText();
    expect(transport.ofType("text")).toHaveLength(3);
    expect(transport.sent.at(-1)).toEqual({ type: "end_text" });
  });

  it("tps <= 0 sends everything immediately", () => {
    const { core, transport } = makeCore();
    core.streamText(["p", "q"], 0);
    expect(transport.ofType("text")).toHaveLength(2);
  });
});

describe("telemetry handling", () => {
  it("series stay bounded to the 60 s window", () => {
    const { core } = makeCore();
    for (let i = 0; i < 2000; i++) {
      core.onMessage(JSON.stringify({ type: "sps", t: i * 0.1, target: 4, achieved: 3.5 }));
    }
    const first = core.state.target[0];
    const last = core.state.target.at(-1)!;
    expect(last.t - first.t).toBeLessThanOrEqual(60);
    expect(core.state.target.length).toBeLessThanOrEqual(601);
  });

  it("histogram bars renormalize for display", () => {
    const { core } = makeCore();
    core.onMessage(
      JSON.stringify({
        type: "histogram",
        p_acc: [0.2, 0.2, 0.2, 0.2, 0.1, 0.0999],
        p_target: [1, 1, 1, 1, 1, 1],
      }),
    );
    const sum = core.state.pAcc.reduce((a, b) => a + b, 0);
    expect(Math.abs(sum - 1)).toBeLessThan(1e-12);
    expect(core.state.pTarget[0]).toBeCloseTo(1 / 6, 12);
    expect(normalizeForDisplay([0, 0])).toEqual([0, 0]);
  });

  it("malformed messages are counted and skipped, never thrown", () => {
    const { core } = makeCore();
    for (const junk of ["{", "42", '{"type":"warp"}', "", '["a"]']) {
      core.onMessage(junk);
    }
    expect(core.state.skippedMessages).toBe(5);
    expect(core.state.frames).toBe(0);
  });

  it("frames, metrics, errors, done update the readouts", () => {
    const { core } = makeCore();
    core.onMessage(JSON.stringify({ type: "frame", index: 0, t: 0.08, duration_token: 2,
                                    semantic: 1, covered_phonemes: [0] }));
    core.onMessage(JSON.stringify({ type: "metrics", fpl_ms: 82.0, rtf_so_far: 0.06 }));
    core.onMessage(JSON.stringify({ type: "error", code: "warning", text: "clamped" }));
    core.onMessage(JSON.stringify({ type: "done", totals: { frames: 1 } }));
    expect(core.state.frames).toBe(1);
    expect(core.state.fplMs).toBe(82);
    expect(core.state.lastError).toBe("clamped");
    expect(core.state.status).toBe("done");
    expect(core.transcript).toHaveLength(4);
  });

  it("reset clears charts and counters for a fresh session", () => {
    const { core } = makeCore();
    core.onMessage(JSON.stringify({ type: "sps", t: 1, target: 4, achieved: 2 }));
    core.onMessage(JSON.stringify({ type: "frame", index: 0, t: 1, duration_token: 0,
                                    semantic: 0, covered_phonemes: [0] }));
    core.reset();
    expect(core.state.frames).toBe(0);
    expect(core.state.target).toHaveLength(0);
    expect(core.transcript).toHaveLength(0);
    expect(core.state.status).toBe("idle");
  });
});

describe("protocol parsing", () => {
  it("accepts every documented telemetry type", () => {
    for (const type of ["frame", "sps", "histogram", "metrics", "error", "done"]) {
      expect(parseTelemetry(JSON.stringify({ type }))?.type).toBe(type);
    }
  });

  it("rejects unknown and non-object payloads", () => {
    expect(parseTelemetry('{"type":"nope"}')).toBeNull();
    expect(parseTelemetry("3")).toBeNull();
    expect(parseTelemetry("null")).toBeNull();
  });
});

describe("chart layout", () => {
  it("maps the time window and value range onto pixels", () => {
    const layouts = layoutLines(
      [{ label: "x", color: "#fff", points: [{ t: 40, v: 0 }, { t: 100, v: 8 }] }],
      200, 100, 100, 60, 0, 8,
    );
    expect(layouts[0].pixels).toEqual([
      { x: 0, y: 100 },
      { x: 200, y: 0 },
    ]);
  });

  it("drops points that scrolled out of the window", () => {
    const layouts = layoutLines(
      [{ label: "x", color: "#fff", points: [{ t: 0, v: 1 }, { t: 90, v: 1 }] }],
      200, 100, 100, 60, 0, 8,
    );
    expect(layouts[0].pixels).toHaveLength(1);
  });
});
