import type { Draw2D } from "../src/render.js";

/** Deterministic PRNG so property loops are reproducible. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface DrawOp {
  op: string;
  lineWidth?: number;
  strokeStyle?: string;
  fillStyle?: string;
  globalAlpha?: number;
  args?: unknown[];
  text?: string;
}

/** Records draw calls with the style active at call time. */
export class RecordingCtx implements Draw2D {
  lineWidth = 1;
  strokeStyle = "#000000";
  fillStyle = "#000000";
  globalAlpha = 1;
  font = "";
  ops: DrawOp[] = [];

  private record(op: string, extra: Partial<DrawOp> = {}): void {
    this.ops.push({
      op,
      lineWidth: this.lineWidth,
      strokeStyle: this.strokeStyle,
      fillStyle: this.fillStyle,
      globalAlpha: this.globalAlpha,
      ...extra,
    });
  }

  clearRect(...args: number[]): void {
    this.record("clearRect", { args });
  }
  fillRect(...args: number[]): void {
    this.record("fillRect", { args });
  }
  strokeRect(...args: number[]): void {
    this.record("strokeRect", { args });
  }
  beginPath(): void {
    this.record("beginPath");
  }
  moveTo(...args: number[]): void {
    this.record("moveTo", { args });
  }
  lineTo(...args: number[]): void {
    this.record("lineTo", { args });
  }
  arc(...args: number[]): void {
    this.record("arc", { args });
  }
  stroke(): void {
    this.record("stroke");
  }
  fill(): void {
    this.record("fill");
  }
  fillText(text: string, x: number, y: number): void {
    this.record("fillText", { text, args: [x, y] });
  }
  save(): void {
    this.record("save");
  }
  restore(): void {
    this.record("restore");
  }
}

/** Minimal valid state frame for view-model and render tests. */
export function stateFrame(overrides: Record<string, unknown> = {}): string {
  return JSON.stringify({
    type: "state",
    tick: 1,
    position: [0.5, 0.5],
    velocity: [0.1, 0.0],
    kv: 0.1,
    active_cluster: 0,
    posteriors: [[0.25, 0.25, 0.25, 0.25]],
    log_marginals: [-1.0],
    converged: false,
    ...overrides,
  });
}
