// Headless console state machine: owns everything except the DOM so the
// behavior is testable without a browser. Session state only ever changes
// through outbound ClientMessages; rendering reads immutable-ish snapshots.

import {
  ClientMessage,
  SessionConfig,
  Telemetry,
  parseTelemetry,
} from "./protocol.js";

export interface Transport {
  send(msg: ClientMessage): void;
  close(): void;
}

/** Injectable timer pair so debounce/pacing are testable with fake time. */
export interface TimerHost {
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
}

export const realTimers: TimerHost = {
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (h) => clearTimeout(h as Parameters<typeof clearTimeout>[0]),
};

export interface SeriesPoint {
  t: number;
  v: number;
}

export type Status = "idle" | "streaming" | "done" | "error";

export interface ConsoleState {
  status: Status;
  frames: number;
  sessionTime: number;
  slider: number;
  target: SeriesPoint[];
  achieved: SeriesPoint[];
  pAcc: number[];
  pTarget: number[];
  fplMs: number | null;
  rtfSoFar: number | null;
  lastError: string | null;
  skippedMessages: number;
  wordsSent: number;
  wordsPending: number;
  doneTotals: Record<string, unknown> | null;
}

export const RATE_MIN = 1.0;
export const RATE_MAX = 7.0;
export const DEBOUNCE_MS = 100;
export const SERIES_WINDOW_S = 60;

function initialState(slider: number): ConsoleState {
  return {
    status: "idle",
    frames: 0,
    sessionTime: 0,
    slider,
    target: [],
    achieved: [],
    pAcc: [],
    pTarget: [],
    fplMs: null,
    rtfSoFar: null,
    lastError: null,
    skippedMessages: 0,
    wordsSent: 0,
    wordsPending: 0,
    doneTotals: null,
  };
}

export class ConsoleCore {
  readonly state: ConsoleState;
  private transport: Transport;
  private timers: TimerHost;
  private debounceMs: number;
  private windowS: number;
  private debounceHandle: unknown = null;
  private pendingRate: number | null = null;
  private textTimer: unknown = null;
  private textQueue: string[] = [];
  private listeners: Array<() => void> = [];
  readonly transcript: Telemetry[] = [];

  constructor(
    transport: Transport,
    opts: { slider?: number; debounceMs?: number; windowS?: number; timers?: TimerHost } = {},
  ) {
    this.transport = transport;
    this.timers = opts.timers ?? realTimers;
    this.debounceMs = opts.debounceMs ?? DEBOUNCE_MS;
    this.windowS = opts.windowS ?? SERIES_WINDOW_S;
    this.state = initialState(clampRate(opts.slider ?? 4.0));
  }

  subscribe(fn: () => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  // -- outbound ---------------------------------------------------------------

  start(config: SessionConfig): void {
    this.transport.send({ type: "start", config: { sps: this.state.slider, ...config } });
    this.state.status = "streaming";
    if (config.sps !== undefined) this.state.slider = clampRate(config.sps);
    this.notify();
  }

  /** Dispatch words at the chosen rate; tps <= 0 sends everything at once. */
  streamText(words: string[], tps: number): void {
    this.textQueue.push(...words);
    this.state.wordsPending = this.textQueue.length;
    if (tps <= 0) {
      while (this.textQueue.length) this.sendNextWord();
      this.notify();
      return;
    }
    if (this.textTimer !== null) return; // already draining at some rate
    const interval = 1000 / tps;
    const pump = () => {
      this.sendNextWord();
      if (this.textQueue.length) {
        this.textTimer = this.timers.setTimeout(pump, interval);
      } else {
        this.textTimer = null;
      }
      this.notify();
    };
    pump();
  }

  private sendNextWord(): void {
    const word = this.textQueue.shift();
    if (word === undefined) return;
    this.transport.send({ type: "text", token: word });
    this.state.wordsSent += 1;
    this.state.wordsPending = this.textQueue.length;
  }

  endText(): void {
    if (this.textTimer !== null) {
      this.timers.clearTimeout(this.textTimer);
      this.textTimer = null;
    }
    while (this.textQueue.length) this.sendNextWord();
    this.transport.send({ type: "end_text" });
    this.notify();
  }

  /** Slider movement: clamped, debounced to exactly one set_rate per settle. */
  setSlider(value: number): void {
    const sps = clampRate(value);
    this.state.slider = sps;
    this.pendingRate = sps;
    if (this.debounceHandle !== null) this.timers.clearTimeout(this.debounceHandle);
    this.debounceHandle = this.timers.setTimeout(() => {
      this.debounceHandle = null;
      if (this.pendingRate !== null) {
        this.transport.send({ type: "set_rate", sps: this.pendingRate });
        this.pendingRate = null;
      }
    }, this.debounceMs);
    this.notify();
  }

  stop(): void {
    this.transport.send({ type: "stop" });
    this.transport.close();
  }

  // -- inbound ----------------------------------------------------------------

  onMessage(raw: string): void {
    const msg = parseTelemetry(raw);
    if (msg === null) {
      this.state.skippedMessages += 1;
      return;
    }
    this.transcript.push(msg);
    this.apply(msg);
    this.notify();
  }

  private apply(msg: Telemetry): void {
    const s = this.state;
    switch (msg.type) {
      case "frame":
        s.frames += 1;
        s.sessionTime = msg.t;
        break;
      case "sps":
        s.sessionTime = Math.max(s.sessionTime, msg.t);
        if (msg.target !== null) pushPoint(s.target, { t: msg.t, v: msg.target }, this.windowS);
        if (msg.achieved !== null)
          pushPoint(s.achieved, { t: msg.t, v: msg.achieved }, this.windowS);
        break;
      case "histogram":
        s.pAcc = normalizeForDisplay(msg.p_acc);
        s.pTarget = normalizeForDisplay(msg.p_target);
        break;
      case "metrics":
        s.fplMs = msg.fpl_ms;
        s.rtfSoFar = msg.rtf_so_far;
        break;
      case "error":
        s.lastError = msg.text;
        if (msg.fatal) s.status = "error";
        break;
      case "done":
        s.status = "done";
        s.doneTotals = msg.totals;
        break;
    }
  }

  /** Connection dropped or restarted: fresh charts, fresh counters. */
  reset(transport?: Transport): void {
    if (transport) this.transport = transport;
    if (this.debounceHandle !== null) this.timers.clearTimeout(this.debounceHandle);
    if (this.textTimer !== null) this.timers.clearTimeout(this.textTimer);
    this.debounceHandle = null;
    this.textTimer = null;
    this.pendingRate = null;
    this.textQueue = [];
    this.transcript.length = 0;
    Object.assign(this.state, initialState(this.state.slider));
    this.notify();
  }
}

export function clampRate(sps: number): number {
  return Math.min(RATE_MAX, Math.max(RATE_MIN, sps));
}

function pushPoint(series: SeriesPoint[], point: SeriesPoint, windowS: number): void {
  series.push(point);
  const cutoff = point.t - windowS;
  let drop = 0;
  while (drop < series.length && series[drop].t < cutoff) drop++;
  if (drop > 0) series.splice(0, drop);
}

/** Bars always display a unit-sum histogram even if transport rounding nudged it. */
export function normalizeForDisplay(p: number[]): number[] {
  const total = p.reduce((a, b) => a + b, 0);
  if (total <= 0) return p.map(() => 0);
  return p.map((x) => x / total);
}
