// Tiny dependency-free scrolling line chart on a 2D canvas.

import type { Annotation, Point } from "./store.js";
import { CHART_WINDOW_S } from "./store.js";

const NS = 1e9;

// Cap what one frame draws; the store already bounds stored points, this
// guards pathological zoom-ins.
export function downsampleForDisplay(points: Point[], maxPoints: number
                                     ): Point[] {
  if (points.length <= maxPoints) return points;
  const stride = Math.ceil(points.length / maxPoints);
  const out: Point[] = [];
  for (let i = 0; i < points.length; i += stride) out.push(points[i]);
  const last = points[points.length - 1];
  if (out[out.length - 1] !== last) out.push(last);
  return out;
}

export interface ChartStyle {
  line: string;
  grid: string;
  text: string;
  marker: string;
}

const DEFAULT_STYLE: ChartStyle = {
  line: "#64b5f6",
  grid: "#2a2f3a",
  text: "#9aa4b2",
  marker: "#e8b339",
};

export function drawChart(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  points: Point[],
  annotations: Annotation[] = [],
  style: ChartStyle = DEFAULT_STYLE,
): void {
  ctx.clearRect(0, 0, width, height);
  if (points.length === 0) {
    ctx.fillStyle = style.text;
    ctx.fillText("waiting for data", 8, height / 2);
    return;
  }
  const tEnd = points[points.length - 1].t;
  const tStart = tEnd - CHART_WINDOW_S * NS;
  let vMin = Infinity;
  let vMax = -Infinity;
  for (const p of points) {
    if (p.v < vMin) vMin = p.v;
    if (p.v > vMax) vMax = p.v;
  }
  if (vMin === vMax) {
    vMin -= 1;
    vMax += 1;
  }
  const pad = (vMax - vMin) * 0.1;
  vMin -= pad;
  vMax += pad;

  const x = (t: number) => ((t - tStart) / (tEnd - tStart)) * width;
  const y = (v: number) => height - ((v - vMin) / (vMax - vMin)) * height;

  ctx.strokeStyle = style.grid;
  ctx.lineWidth = 1;
  for (let i = 1; i < 4; i++) {
    const gy = (height / 4) * i;
    ctx.beginPath();
    ctx.moveTo(0, gy);
    ctx.lineTo(width, gy);
    ctx.stroke();
  }

  const visible = downsampleForDisplay(
    points.filter((p) => p.t >= tStart), 2000);
  ctx.strokeStyle = style.line;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  visible.forEach((p, i) => {
    if (i === 0) ctx.moveTo(x(p.t), y(p.v));
    else ctx.lineTo(x(p.t), y(p.v));
  });
  ctx.stroke();

  ctx.strokeStyle = style.marker;
  ctx.fillStyle = style.marker;
  for (const a of annotations) {
    if (a.busTimeNs < tStart || a.busTimeNs > tEnd) continue;
    const ax = x(a.busTimeNs);
    ctx.beginPath();
    ctx.moveTo(ax, 0);
    ctx.lineTo(ax, height);
    ctx.stroke();
    ctx.fillText(a.label, Math.min(ax + 3, width - 40), 12);
  }

  ctx.fillStyle = style.text;
  ctx.fillText(vMax.toFixed(2), 4, 12);
  ctx.fillText(vMin.toFixed(2), 4, height - 4);
}
