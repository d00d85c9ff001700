// Wire types for the control-service session protocol (see docs/protocol.md
// in the engine repo). One JSON object per WebSocket text frame.

export interface SessionConfig {
  tps?: number | "inf";
  la_min?: number;
  la_max?: number;
  src?: boolean;
  seed?: number;
  schedule?: string;
  sps?: number;
  clock?: "wall" | "simulated";
  gamma_temp?: number;
  gamma_depth?: number;
  cfg_text?: boolean;
  cfg_audio?: boolean;
  cfg_speaker?: boolean;
}

export type ClientMessage =
  | { type: "start"; config: SessionConfig }
  | { type: "text"; token: string }
  | { type: "end_text" }
  | { type: "set_rate"; sps: number }
  | { type: "stop" };

export interface FrameMsg {
  type: "frame";
  index: number;
  t: number;
  duration_token: number;
  semantic: number;
  covered_phonemes: number[];
}

export interface SpsMsg {
  type: "sps";
  t: number;
  target: number | null;
  achieved: number | null;
}

export interface HistogramMsg {
  type: "histogram";
  p_acc: number[];
  p_target: number[];
}

export interface MetricsMsg {
  type: "metrics";
  fpl_ms: number | null;
  rtf_so_far: number | null;
}

export interface ErrorMsg {
  type: "error";
  code?: string;
  text: string;
  fatal?: boolean;
}

export interface DoneMsg {
  type: "done";
  totals: Record<string, unknown>;
}

export type Telemetry = FrameMsg | SpsMsg | HistogramMsg | MetricsMsg | ErrorMsg | DoneMsg;

const TELEMETRY_TYPES = new Set(["frame", "sps", "histogram", "metrics", "error", "done"]);

/** Parse one telemetry line; null for anything malformed (callers log and skip). */
export function parseTelemetry(raw: string): Telemetry | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const msg = doc as { type?: unknown };
  if (typeof msg.type !== "string" || !TELEMETRY_TYPES.has(msg.type)) return null;
  return doc as Telemetry;
}

export function serialize(msg: ClientMessage): string {
  return JSON.stringify(msg);
}
