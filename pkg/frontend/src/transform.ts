/**
 * World <-> screen mapping. One uniform scale for both axes (distances
 * stay distances) and a y-flip so world "up" renders up on the canvas.
 * worldToScreen and screenToWorld are exact algebraic inverses.
 */

export interface Camera {
  scale: number;
  offsetX: number;
  offsetY: number;
  height: number;
}

export type Point = readonly [number, number];

/** Camera that fits the given world points into width x height. */
export function fitCamera(
  points: Iterable<readonly number[]>,
  width: number,
  height: number,
  marginFrac = 0.08,
): Camera {
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const p of points) {
    const x = p[0] ?? 0;
    const y = p[1] ?? 0;
    if (x < minX) minX = x;
    if (x > maxX) maxX = x;
    if (y < minY) minY = y;
    if (y > maxY) maxY = y;
  }
  if (!Number.isFinite(minX)) {
    minX = minY = 0;
    maxX = maxY = 1;
  }
  // degenerate extents still need a usable scale
  const spanX = Math.max(maxX - minX, 1e-9);
  const spanY = Math.max(maxY - minY, 1e-9);
  const usableW = width * (1 - 2 * marginFrac);
  const usableH = height * (1 - 2 * marginFrac);
  const scale = Math.min(usableW / spanX, usableH / spanY);
  const offsetX = width / 2 - scale * (minX + maxX) / 2;
  const offsetY = height / 2 - scale * (minY + maxY) / 2;
  return { scale, offsetX, offsetY, height };
}

export function worldToScreen(cam: Camera, p: Point): [number, number] {
  return [cam.offsetX + cam.scale * p[0], cam.height - (cam.offsetY + cam.scale * p[1])];
}

export function screenToWorld(cam: Camera, p: Point): [number, number] {
  return [(p[0] - cam.offsetX) / cam.scale, (cam.height - p[1] - cam.offsetY) / cam.scale];
}
