/**
 * Everything the renderer reads, kept strictly downstream of the
 * server: displayed quantities come from the last received message or
 * the fetched model, never from client-side simulation. Reloading the
 * page mid-session rebuilds the same view from the message stream.
 */

import type {
  ErrorFrame,
  ModelGeometry,
  ServerMessage,
  SessionFrame,
  StateFrame,
} from "./protocol.js";
import { fitCamera, type Camera } from "./transform.js";

/** Posterior strips are downsampled to at most this many cells. */
export const MAX_HEAT_CELLS = 128;

/** Trail length cap; old positions fall off the back. */
export const MAX_TRAIL = 800;

/**
 * Mass-preserving downsample: cell i sums p over its slice of the
 * index range, so the strip total equals the posterior total and a
 * one-hot posterior stays a single hot cell.
 */
export function downsampleMass(p: readonly number[], maxCells: number): number[] {
  if (p.length <= maxCells) return p.slice();
  const out = new Array<number>(maxCells).fill(0);
  for (let j = 0; j < p.length; j++) {
    const i = Math.min(maxCells - 1, Math.floor((j * maxCells) / p.length));
    out[i] = (out[i] ?? 0) + (p[j] ?? 0);
  }
  return out;
}

export class ViewModel {
  readonly model: ModelGeometry;
  /** Optional extra polylines (demonstrations) drawn thin behind the means. */
  readonly demos: readonly number[][][];
  camera: Camera;
  session: SessionFrame | null = null;
  state: StateFrame | null = null;
  lastError: ErrorFrame | null = null;
  trail: [number, number][] = [];

  constructor(
    model: ModelGeometry,
    width: number,
    height: number,
    demos: readonly number[][][] = [],
  ) {
    this.model = model;
    this.demos = demos;
    const points: number[][] = [];
    for (const c of model.clusters) points.push(...c.states);
    for (const d of demos) points.push(...d);
    this.camera = fitCamera(points, width, height);
  }

  /** Fold one server frame in; latest snapshot wins. */
  handleMessage(msg: ServerMessage): void {
    if (msg.type === "error") {
      this.lastError = msg;
      return;
    }
    if (msg.type === "session") {
      this.session = msg;
      if (msg.tick === 0) this.trail = [];
      return;
    }
    // a tick that moved backwards means the session was reset
    if (this.state !== null && msg.tick < this.state.tick) this.trail = [];
    this.state = msg;
    const [x, y] = [msg.position[0] ?? 0, msg.position[1] ?? 0];
    const last = this.trail[this.trail.length - 1];
    if (last === undefined || last[0] !== x || last[1] !== y) {
      this.trail.push([x, y]);
      if (this.trail.length > MAX_TRAIL) this.trail.shift();
    }
  }

  /** True until the first state frame arrives. */
  waiting(): boolean {
    return this.state === null;
  }

  activeCluster(): number {
    return this.state?.active_cluster ?? 0;
  }

  /** Heat-strip cells for one cluster, <= MAX_HEAT_CELLS long. */
  heatStrip(cluster: number): number[] {
    const p = this.state?.posteriors[cluster];
    return p === undefined ? [] : downsampleMass(p, MAX_HEAT_CELLS);
  }

  /** Endpoint of the active cluster once converged, else null. */
  convergedEndpoint(): [number, number] | null {
    if (this.state === null || !this.state.converged) return null;
    const states = this.model.clusters[this.state.active_cluster]?.states;
    const end = states?.[states.length - 1];
    return end === undefined ? null : [end[0] ?? 0, end[1] ?? 0];
  }
}
