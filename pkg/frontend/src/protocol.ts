/**
 * Wire types for the playground server: JSON text frames over one
 * WebSocket, plus the model payload fetched over HTTP.
 *
 * Parsing is strict — a frame that does not match the contract throws
 * ProtocolError rather than leaking a half-valid object into the UI.
 */

export const KERNEL_NAMES = ["gradient", "stable", "backwards", "periodic"] as const;
export type KernelName = (typeof KERNEL_NAMES)[number];

export class ProtocolError extends Error {}

/** First frame after connecting and after any reset-like command. */
export interface SessionFrame {
  type: "session";
  start: number[];
  kernel: string;
  tick_ms: number;
  budget: number;
  running: boolean;
  tick: number;
}

/** One controller tick: everything the UI displays comes from here. */
export interface StateFrame {
  type: "state";
  tick: number;
  position: number[];
  velocity: number[];
  kv: number;
  active_cluster: number;
  posteriors: number[][];
  log_marginals: number[];
  converged: boolean;
}

/** Per-client rejection of a malformed or inapplicable command. */
export interface ErrorFrame {
  type: "error";
  field: string;
  error: string;
}

export type ServerMessage = SessionFrame | StateFrame | ErrorFrame;

export type ClientCommand =
  | { kind: "start" | "pause" | "reset" }
  | { kind: "set_position" | "drag_offset" | "set_start"; payload: [number, number] }
  | { kind: "set_kernel"; payload: string };

export interface ClusterGeometry {
  states: number[][];
  dt: number;
  speeds: number[];
}

export interface ModelGeometry {
  clusters: ClusterGeometry[];
}

function fail(field: string, why: string): never {
  throw new ProtocolError(`${field}: ${why}`);
}

function asObject(v: unknown, field: string): Record<string, unknown> {
  if (typeof v !== "object" || v === null || Array.isArray(v)) {
    fail(field, "expected an object");
  }
  return v as Record<string, unknown>;
}

function asFiniteNumber(v: unknown, field: string): number {
  if (typeof v !== "number" || !Number.isFinite(v)) fail(field, "expected a finite number");
  return v;
}

function asBoolean(v: unknown, field: string): boolean {
  if (typeof v !== "boolean") fail(field, "expected a boolean");
  return v;
}

function asString(v: unknown, field: string): string {
  if (typeof v !== "string") fail(field, "expected a string");
  return v;
}

function asNumberArray(v: unknown, field: string): number[] {
  if (!Array.isArray(v)) fail(field, "expected an array of numbers");
  return v.map((x, i) => asFiniteNumber(x, `${field}[${i}]`));
}

function asMatrix(v: unknown, field: string): number[][] {
  if (!Array.isArray(v)) fail(field, "expected an array of rows");
  return v.map((row, i) => asNumberArray(row, `${field}[${i}]`));
}

/** Parse one server frame; throws ProtocolError when it is malformed. */
export function parseServerMessage(text: string): ServerMessage {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    fail("<frame>", "not valid JSON");
  }
  const obj = asObject(raw, "<frame>");
  switch (obj["type"]) {
    case "session":
      return {
        type: "session",
        start: asNumberArray(obj["start"], "start"),
        kernel: asString(obj["kernel"], "kernel"),
        tick_ms: asFiniteNumber(obj["tick_ms"], "tick_ms"),
        budget: asFiniteNumber(obj["budget"], "budget"),
        running: asBoolean(obj["running"], "running"),
        tick: asFiniteNumber(obj["tick"], "tick"),
      };
    case "state": {
      const posteriors = asMatrix(obj["posteriors"], "posteriors");
      const logMarginals = asNumberArray(obj["log_marginals"], "log_marginals");
      if (posteriors.length !== logMarginals.length) {
        fail("posteriors", `have ${posteriors.length} clusters, log_marginals ${logMarginals.length}`);
      }
      const active = asFiniteNumber(obj["active_cluster"], "active_cluster");
      if (!Number.isInteger(active) || active < 0 || active >= posteriors.length) {
        fail("active_cluster", `index ${active} out of range for ${posteriors.length} clusters`);
      }
      return {
        type: "state",
        tick: asFiniteNumber(obj["tick"], "tick"),
        position: asNumberArray(obj["position"], "position"),
        velocity: asNumberArray(obj["velocity"], "velocity"),
        kv: asFiniteNumber(obj["kv"], "kv"),
        active_cluster: active,
        posteriors,
        log_marginals: logMarginals,
        converged: asBoolean(obj["converged"], "converged"),
      };
    }
    case "error":
      return {
        type: "error",
        field: asString(obj["field"], "field"),
        error: asString(obj["error"], "error"),
      };
    default:
      fail("type", `unknown frame type ${JSON.stringify(obj["type"])}`);
  }
}

/** Serialize a command, validating payloads before they reach the wire. */
export function encodeCommand(cmd: ClientCommand): string {
  switch (cmd.kind) {
    case "start":
    case "pause":
    case "reset":
      return JSON.stringify({ kind: cmd.kind });
    case "set_position":
    case "drag_offset":
    case "set_start": {
      const [x, y] = cmd.payload;
      if (!Number.isFinite(x) || !Number.isFinite(y)) {
        fail("payload", `${cmd.kind} coordinates must be finite`);
      }
      return JSON.stringify({ kind: cmd.kind, payload: [x, y] });
    }
    case "set_kernel":
      if (!(KERNEL_NAMES as readonly string[]).includes(cmd.payload)) {
        fail("payload", `unknown kernel ${JSON.stringify(cmd.payload)}`);
      }
      return JSON.stringify({ kind: cmd.kind, payload: cmd.payload });
  }
}

/** Parse the GET /model response into renderable geometry. */
export function parseModelPayload(raw: unknown): ModelGeometry {
  const obj = asObject(raw, "<model>");
  if (!Array.isArray(obj["clusters"]) || obj["clusters"].length === 0) {
    fail("clusters", "expected a non-empty array");
  }
  const clusters = obj["clusters"].map((c, i) => {
    const cl = asObject(c, `clusters[${i}]`);
    const states = asMatrix(cl["states"], `clusters[${i}].states`);
    if (states.length === 0) fail(`clusters[${i}].states`, "expected at least one state");
    const speeds = asNumberArray(cl["speeds"], `clusters[${i}].speeds`);
    if (speeds.length !== states.length) {
      fail(`clusters[${i}].speeds`, `${speeds.length} speeds for ${states.length} states`);
    }
    return { states, dt: asFiniteNumber(cl["dt"], `clusters[${i}].dt`), speeds };
  });
  return { clusters };
}
