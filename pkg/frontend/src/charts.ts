// Canvas chart rendering: a 60-second two-line rate chart and paired
// histogram bars. Layout math is split out pure so tests can cover it
// without a canvas.

import { SeriesPoint } from "./core.js";

export interface Line {
  label: string;
  color: string;
  points: SeriesPoint[];
}

export interface PixelPoint {
  x: number;
  y: number;
}

export interface LineLayout {
  label: string;
  color: string;
  pixels: PixelPoint[];
}

/** Map series onto a fixed time window ending at `now`, y spanning [yMin, yMax]. */
export function layoutLines(
  lines: Line[],
  width: number,
  height: number,
  now: number,
  windowS: number,
  yMin: number,
  yMax: number,
): LineLayout[] {
  const t0 = now - windowS;
  const span = yMax - yMin || 1;
  return lines.map((line) => ({
    label: line.label,
    color: line.color,
    pixels: line.points
      .filter((p) => p.t >= t0)
      .map((p) => ({
        x: ((p.t - t0) / windowS) * width,
        y: height - ((p.v - yMin) / span) * height,
      })),
  }));
}

export function drawRateChart(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  target: SeriesPoint[],
  achieved: SeriesPoint[],
  now: number,
  windowS = 60,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);
  ctx.strokeStyle = "#2a3442";
  ctx.lineWidth = 1;
  for (let sps = 1; sps <= 8; sps += 1) {
    const y = height - ((sps - 0) / 8) * height;
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(width, y);
    ctx.stroke();
  }
  const layouts = layoutLines(
    [
      { label: "target", color: "#4ea1ff", points: target },
      { label: "achieved", color: "#ffb454", points: achieved },
    ],
    width,
    height,
    now,
    windowS,
    0,
    8,
  );
  for (const line of layouts) {
    if (line.pixels.length < 2) continue;
    ctx.strokeStyle = line.color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(line.pixels[0].x, line.pixels[0].y);
    for (const p of line.pixels.slice(1)) ctx.lineTo(p.x, p.y);
    ctx.stroke();
  }
}

export function drawHistogramPairs(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  pAcc: number[],
  pTarget: number[],
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);
  const bins = Math.max(pAcc.length, pTarget.length, 1);
  const slot = width / bins;
  const bar = slot * 0.34;
  const ymax = Math.max(0.4, ...pAcc, ...pTarget);
  for (let i = 0; i < bins; i++) {
    const acc = pAcc[i] ?? 0;
    const tgt = pTarget[i] ?? 0;
    ctx.fillStyle = "#ffb454";
    ctx.fillRect(i * slot + slot * 0.12, height - (acc / ymax) * height, bar, (acc / ymax) * height);
    ctx.fillStyle = "#4ea1ff";
    ctx.fillRect(i * slot + slot * 0.54, height - (tgt / ymax) * height, bar, (tgt / ymax) * height);
  }
}
