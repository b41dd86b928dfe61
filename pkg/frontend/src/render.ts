/**
 * Canvas drawing as a pure function of the view model. Operates on a
 * minimal 2D-context interface so tests can record draw calls instead
 * of rasterizing; rendering never mutates server truth.
 */

import { worldToScreen } from "./transform.js";
import type { ViewModel } from "./viewmodel.js";

/** The subset of CanvasRenderingContext2D the renderer touches. */
export interface Draw2D {
  lineWidth: number;
  strokeStyle: string;
  fillStyle: string;
  globalAlpha: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
  save(): void;
  restore(): void;
}

export const CLUSTER_COLORS = [
  "#1f77b4",
  "#2ca02c",
  "#d62728",
  "#9467bd",
  "#ff7f0e",
  "#17becf",
] as const;

export function clusterColor(i: number): string {
  return CLUSTER_COLORS[i % CLUSTER_COLORS.length] as string;
}

export const DEMO_WIDTH = 1;
export const MEAN_WIDTH = 2.5;
export const MEAN_ACTIVE_WIDTH = 4.5;
export const TRAIL_WIDTH = 1.5;
export const DOT_MIN_RADIUS = 4;
export const DOT_RADIUS_PER_KV = 2.5;
export const DOT_MAX_RADIUS = 18;
export const ENDPOINT_RADIUS = 9;
export const STRIP_HEIGHT = 12;
export const STRIP_GAP = 4;

export function agentRadius(kv: number): number {
  return Math.min(DOT_MAX_RADIUS, DOT_MIN_RADIUS + DOT_RADIUS_PER_KV * Math.max(0, kv));
}

function polyline(ctx: Draw2D, view: ViewModel, points: readonly (readonly number[])[]): void {
  if (points.length === 0) return;
  ctx.beginPath();
  const first = points[0] as [number, number];
  const [x0, y0] = worldToScreen(view.camera, [first[0] ?? 0, first[1] ?? 0]);
  ctx.moveTo(x0, y0);
  for (let i = 1; i < points.length; i++) {
    const p = points[i] as [number, number];
    const [x, y] = worldToScreen(view.camera, [p[0] ?? 0, p[1] ?? 0]);
    ctx.lineTo(x, y);
  }
  ctx.stroke();
}

function drawHeatStrips(ctx: Draw2D, view: ViewModel, width: number, height: number): void {
  const k = view.model.clusters.length;
  for (let c = 0; c < k; c++) {
    const cells = view.heatStrip(c);
    if (cells.length === 0) continue;
    const y = height - (k - c) * (STRIP_HEIGHT + STRIP_GAP);
    const cellW = width / cells.length;
    const peak = Math.max(...cells);
    ctx.fillStyle = clusterColor(c);
    for (let i = 0; i < cells.length; i++) {
      const mass = cells[i] ?? 0;
      ctx.globalAlpha = peak > 0 ? mass / peak : 0;
      ctx.fillRect(i * cellW, y, cellW, STRIP_HEIGHT);
    }
    ctx.globalAlpha = 1;
    ctx.strokeStyle = c === view.activeCluster() ? clusterColor(c) : "#cccccc";
    ctx.lineWidth = 1;
    ctx.strokeRect(0, y, width, STRIP_HEIGHT);
  }
}

/** Draw one full frame. */
export function render(ctx: Draw2D, view: ViewModel, width: number, height: number): void {
  ctx.save();
  ctx.globalAlpha = 1;
  ctx.clearRect(0, 0, width, height);

  ctx.globalAlpha = 0.5;
  ctx.strokeStyle = "#999999";
  ctx.lineWidth = DEMO_WIDTH;
  for (const demo of view.demos) polyline(ctx, view, demo);

  for (let c = 0; c < view.model.clusters.length; c++) {
    const active = c === view.activeCluster() && !view.waiting();
    ctx.globalAlpha = active ? 1 : 0.4;
    ctx.strokeStyle = clusterColor(c);
    ctx.lineWidth = active ? MEAN_ACTIVE_WIDTH : MEAN_WIDTH;
    polyline(ctx, view, (view.model.clusters[c] as { states: number[][] }).states);
  }

  if (view.waiting()) {
    ctx.globalAlpha = 1;
    ctx.fillStyle = "#333333";
    ctx.font = "16px sans-serif";
    ctx.fillText("waiting for server…", width / 2 - 70, height / 2);
    ctx.restore();
    return;
  }
  const state = view.state;
  if (state === null) {
    ctx.restore();
    return;
  }

  ctx.globalAlpha = 0.8;
  ctx.strokeStyle = "#444444";
  ctx.lineWidth = TRAIL_WIDTH;
  polyline(ctx, view, view.trail);

  const [ax, ay] = worldToScreen(view.camera, [
    state.position[0] ?? 0,
    state.position[1] ?? 0,
  ]);
  ctx.globalAlpha = 1;
  ctx.fillStyle = clusterColor(state.active_cluster);
  ctx.beginPath();
  ctx.arc(ax, ay, agentRadius(state.kv), 0, 2 * Math.PI);
  ctx.fill();

  const endpoint = view.convergedEndpoint();
  if (endpoint !== null) {
    const [ex, ey] = worldToScreen(view.camera, endpoint);
    ctx.strokeStyle = "#000000";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(ex, ey, ENDPOINT_RADIUS, 0, 2 * Math.PI);
    ctx.stroke();
  }

  drawHeatStrips(ctx, view, width, height);
  ctx.restore();
}
