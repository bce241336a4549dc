/**
 * Run-length mask codec matching the service's wire format: runs are
 * row-major and alternate starting with background, so runs[0] counts
 * background pixels (and is the only run allowed to be zero).
 */

export interface Bounds {
  x0: number;
  y0: number;
  x1: number; // exclusive
  y1: number; // exclusive
}

export function decodeRuns(width: number, height: number, runs: number[]): Uint8Array {
  const total = width * height;
  let sum = 0;
  for (let i = 0; i < runs.length; i++) {
    const r = runs[i];
    if (!Number.isInteger(r) || r < 0 || (r === 0 && i > 0)) {
      throw new Error(`bad run at index ${i}: ${r}`);
    }
    sum += r;
  }
  if (sum !== total) {
    throw new Error(`runs sum to ${sum}, expected ${total} for ${width}x${height}`);
  }
  const grid = new Uint8Array(total);
  let pos = 0;
  for (let i = 0; i < runs.length; i++) {
    const value = i % 2;
    if (value) grid.fill(1, pos, pos + runs[i]);
    pos += runs[i];
  }
  return grid;
}

export function encodeRuns(width: number, height: number, grid: Uint8Array): number[] {
  if (grid.length !== width * height) {
    throw new Error(`grid has ${grid.length} pixels, expected ${width * height}`);
  }
  const runs: number[] = [];
  let current = 0; // background first
  let count = 0;
  for (let i = 0; i < grid.length; i++) {
    const v = grid[i] ? 1 : 0;
    if (v === current) {
      count++;
    } else {
      runs.push(count);
      current = v;
      count = 1;
    }
  }
  runs.push(count);
  return runs;
}

/** Tight foreground bounding box, or null for an empty mask. */
export function maskBounds(width: number, height: number, grid: Uint8Array): Bounds | null {
  let x0 = width;
  let y0 = height;
  let x1 = 0;
  let y1 = 0;
  for (let y = 0; y < height; y++) {
    const row = y * width;
    for (let x = 0; x < width; x++) {
      if (grid[row + x]) {
        if (x < x0) x0 = x;
        if (y < y0) y0 = y;
        if (x + 1 > x1) x1 = x + 1;
        if (y + 1 > y1) y1 = y + 1;
      }
    }
  }
  return x1 > x0 ? { x0, y0, x1, y1 } : null;
}

/** Rasterizes a filled polygon; vertices in pixel coordinates, pixel centers tested. */
export function fillPolygon(width: number, height: number, points: [number, number][]): Uint8Array {
  const grid = new Uint8Array(width * height);
  if (points.length < 3) return grid;
  const n = points.length;
  for (let y = 0; y < height; y++) {
    const cy = y + 0.5;
    // even-odd rule against scanline cy
    const xs: number[] = [];
    for (let i = 0; i < n; i++) {
      const [ax, ay] = points[i];
      const [bx, by] = points[(i + 1) % n];
      if (ay <= cy !== by <= cy) {
        xs.push(ax + ((cy - ay) * (bx - ax)) / (by - ay));
      }
    }
    xs.sort((a, b) => a - b);
    for (let k = 0; k + 1 < xs.length; k += 2) {
      const start = Math.max(0, Math.ceil(xs[k] - 0.5));
      const end = Math.min(width - 1, Math.floor(xs[k + 1] - 0.5));
      if (end >= start) grid.fill(1, y * width + start, y * width + end + 1);
    }
  }
  return grid;
}
