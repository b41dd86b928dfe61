/**
 * Turns pointer events into at most one absolute set_position command
 * per animation frame. Absolute coordinates (not offsets) mean a laggy
 * network cannot accumulate drift; coalescing to the latest pointer
 * sample keeps command volume bounded by the frame rate.
 */

import type { ClientCommand } from "./protocol.js";
import { screenToWorld, type Camera } from "./transform.js";

export class DragSource {
  private dragging = false;
  private pending: [number, number] | null = null;

  constructor(private readonly camera: () => Camera) {}

  pointerDown(sx: number, sy: number): void {
    this.dragging = true;
    this.pending = screenToWorld(this.camera(), [sx, sy]);
  }

  pointerMove(sx: number, sy: number): void {
    if (!this.dragging) return;
    this.pending = screenToWorld(this.camera(), [sx, sy]);
  }

  /** Release: whatever is already pending still flushes once. */
  pointerUp(): void {
    this.dragging = false;
  }

  get isDragging(): boolean {
    return this.dragging;
  }

  /** Called once per animation frame; returns the coalesced command. */
  nextCommand(): ClientCommand | null {
    const p = this.pending;
    this.pending = null;
    return p === null ? null : { kind: "set_position", payload: p };
  }
}
