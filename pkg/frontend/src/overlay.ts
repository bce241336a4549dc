/**
 * Turns a prediction plus the session's corrections into drawable overlay
 * items, and paints them over the radiograph.
 *
 * Color convention: raw predictions blue, anything touched by the reviewer
 * (accepted, moved, added, replaced) red. Classes without geometry fall
 * into the missing list instead of failing the draw.
 */

import { decodeRuns } from "./rle.js";
import type { ViewTransform } from "./view.js";
import type { Correction, PredictionDoc, RegistryClass } from "./types.js";

export type Origin = "prediction" | "curated";

export interface SceneLandmark {
  code: string;
  origin: Origin;
  x: number; // original frame
  y: number;
}

export interface SceneMask {
  code: string;
  origin: Origin;
  width: number;
  height: number;
  grid: Uint8Array;
}

export interface ScenePolygon {
  code: string;
  origin: Origin;
  points: [number, number][];
  closed: boolean;
}

export interface MissingEntry {
  code: string;
  /** true when the reviewer confirmed the absence, false for a bare prediction miss */
  resolved: boolean;
}

export interface OverlayScene {
  landmarks: SceneLandmark[];
  masks: SceneMask[];
  polygons: ScenePolygon[];
  missing: MissingEntry[];
  /** codes whose geometry could not be decoded; rendered as list entries only */
  degraded: string[];
}

export function buildScene(
  classes: RegistryClass[],
  prediction: PredictionDoc | null,
  effectiveFor: (code: string) => Correction | undefined,
  visibleGroups: Set<string> | null,
): OverlayScene {
  const scene: OverlayScene = { landmarks: [], masks: [], polygons: [], missing: [], degraded: [] };
  const predLandmarks = new Map((prediction?.landmarks ?? []).map((e) => [e.code, e]));
  const predMasks = new Map((prediction?.masks ?? []).map((e) => [e.code, e]));

  for (const fc of classes) {
    if (visibleGroups && !visibleGroups.has(fc.group)) continue;
    const corr = effectiveFor(fc.code);

    if (corr?.type === "marked_missing") {
      scene.missing.push({ code: fc.code, resolved: true });
      continue;
    }
    if (corr?.type === "moved") {
      scene.landmarks.push({ code: fc.code, origin: "curated", x: corr.point[0], y: corr.point[1] });
      continue;
    }
    if (corr?.type === "added") {
      if (corr.geometry.kind === "landmark") {
        const [x, y] = corr.geometry.point;
        scene.landmarks.push({ code: fc.code, origin: "curated", x, y });
      } else {
        scene.polygons.push({
          code: fc.code,
          origin: "curated",
          points: corr.geometry.points,
          closed: corr.geometry.kind === "patch",
        });
      }
      continue;
    }
    if (corr?.type === "mask_replaced") {
      try {
        scene.masks.push({
          code: fc.code,
          origin: "curated",
          width: corr.width,
          height: corr.height,
          grid: decodeRuns(corr.width, corr.height, corr.runs),
        });
      } catch {
        scene.degraded.push(fc.code);
      }
      continue;
    }

    // accepted keeps the predicted geometry, only the origin changes
    const origin: Origin = corr?.type === "accepted" ? "curated" : "prediction";
    const lm = predLandmarks.get(fc.code);
    if (lm) {
      scene.landmarks.push({ code: fc.code, origin, x: lm.x_px, y: lm.y_px });
      continue;
    }
    const mask = predMasks.get(fc.code);
    if (mask) {
      try {
        scene.masks.push({
          code: fc.code,
          origin,
          width: mask.width,
          height: mask.height,
          grid: decodeRuns(mask.width, mask.height, mask.runs),
        });
      } catch {
        scene.degraded.push(fc.code);
      }
      continue;
    }
    scene.missing.push({ code: fc.code, resolved: corr?.type === "accepted" });
  }
  return scene;
}

const COLORS: Record<Origin, { stroke: string; fill: [number, number, number] }> = {
  prediction: { stroke: "#3b82f6", fill: [59, 130, 246] },
  curated: { stroke: "#ef4444", fill: [239, 68, 68] },
};
const CROSS_PX = 6;
const MASK_ALPHA = 90; // of 255

export class OverlayRenderer {
  private ctx: CanvasRenderingContext2D;
  private maskCache = new Map<string, HTMLCanvasElement>();

  constructor(private canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas context unavailable");
    this.ctx = ctx;
  }

  clearCache(): void {
    this.maskCache.clear();
  }

  render(scene: OverlayScene, view: ViewTransform, selected: string | null): void {
    const ctx = this.ctx;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);

    for (const mask of scene.masks) {
      const tinted = this.tintedMask(mask);
      const origin = view.toScreen({ x: 0, y: 0 });
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(tinted, origin.x, origin.y, mask.width * view.zoom, mask.height * view.zoom);
    }

    for (const poly of scene.polygons) {
      if (poly.points.length === 0) continue;
      ctx.strokeStyle = COLORS[poly.origin].stroke;
      ctx.lineWidth = poly.code === selected ? 3 : 1.5;
      ctx.beginPath();
      poly.points.forEach(([x, y], i) => {
        const p = view.toScreen({ x, y });
        if (i === 0) ctx.moveTo(p.x, p.y);
        else ctx.lineTo(p.x, p.y);
      });
      if (poly.closed) {
        ctx.closePath();
        const [r, g, b] = COLORS[poly.origin].fill;
        ctx.fillStyle = `rgba(${r}, ${g}, ${b}, 0.2)`;
        ctx.fill();
      }
      ctx.stroke();
    }

    for (const lm of scene.landmarks) {
      const p = view.toScreen({ x: lm.x, y: lm.y });
      ctx.strokeStyle = COLORS[lm.origin].stroke;
      ctx.lineWidth = lm.code === selected ? 2.5 : 1.5;
      ctx.beginPath();
      ctx.moveTo(p.x - CROSS_PX, p.y);
      ctx.lineTo(p.x + CROSS_PX, p.y);
      ctx.moveTo(p.x, p.y - CROSS_PX);
      ctx.lineTo(p.x, p.y + CROSS_PX);
      ctx.stroke();
      ctx.fillStyle = COLORS[lm.origin].stroke;
      ctx.font = "10px sans-serif";
      ctx.fillText(lm.code, p.x + CROSS_PX + 2, p.y - 2);
    }
  }

  /** Hit test: nearest landmark within `radiusPx` screen pixels, or null. */
  static pickLandmark(
    scene: OverlayScene,
    view: ViewTransform,
    screen: { x: number; y: number },
    radiusPx = 8,
  ): SceneLandmark | null {
    let best: SceneLandmark | null = null;
    let bestDist = radiusPx;
    for (const lm of scene.landmarks) {
      const p = view.toScreen({ x: lm.x, y: lm.y });
      const dist = Math.hypot(p.x - screen.x, p.y - screen.y);
      if (dist <= bestDist) {
        best = lm;
        bestDist = dist;
      }
    }
    return best;
  }

  private tintedMask(mask: SceneMask): HTMLCanvasElement {
    const key = `${mask.code}:${mask.origin}:${mask.width}x${mask.height}`;
    const cached = this.maskCache.get(key);
    if (cached) return cached;
    const off = document.createElement("canvas");
    off.width = mask.width;
    off.height = mask.height;
    const octx = off.getContext("2d")!;
    const image = octx.createImageData(mask.width, mask.height);
    const [r, g, b] = COLORS[mask.origin].fill;
    for (let i = 0; i < mask.grid.length; i++) {
      if (mask.grid[i]) {
        const at = i * 4;
        image.data[at] = r;
        image.data[at + 1] = g;
        image.data[at + 2] = b;
        image.data[at + 3] = MASK_ALPHA;
      }
    }
    octx.putImageData(image, 0, 0);
    this.maskCache.set(key, off);
    return off;
  }
}
