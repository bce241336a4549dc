/**
 * View transform between original-frame image pixels and screen pixels.
 *
 * screen = original * zoom + pan, per axis. All overlay geometry is stored
 * in the original frame and mapped through this on every draw, so screen
 * positions are never cached anywhere.
 */

export interface Point {
  x: number;
  y: number;
}

export class ViewTransform {
  constructor(
    public readonly zoom: number = 1,
    public readonly panX: number = 0,
    public readonly panY: number = 0,
  ) {
    if (!(zoom > 0) || !Number.isFinite(zoom)) {
      throw new RangeError(`zoom must be a positive finite number, got ${zoom}`);
    }
  }

  toScreen(p: Point): Point {
    return { x: p.x * this.zoom + this.panX, y: p.y * this.zoom + this.panY };
  }

  toOriginal(p: Point): Point {
    return { x: (p.x - this.panX) / this.zoom, y: (p.y - this.panY) / this.zoom };
  }

  /**
   * A drag delta measured in screen pixels, expressed in original-frame
   * pixels: delta / zoom per axis. Pan cancels out, so this equals
   * toOriginal(s + delta) - toOriginal(s) for any screen point s.
   */
  dragToOriginal(dxScreen: number, dyScreen: number): Point {
    return { x: dxScreen / this.zoom, y: dyScreen / this.zoom };
  }

  pannedBy(dxScreen: number, dyScreen: number): ViewTransform {
    return new ViewTransform(this.zoom, this.panX + dxScreen, this.panY + dyScreen);
  }

  /** Rescales about a screen-space anchor, keeping it over the same original point. */
  zoomedAt(anchor: Point, factor: number): ViewTransform {
    const zoom = this.zoom * factor;
    return new ViewTransform(
      zoom,
      anchor.x - (anchor.x - this.panX) * factor,
      anchor.y - (anchor.y - this.panY) * factor,
    );
  }

  /** Letterboxes an image into a viewport, centered. */
  static fit(imageW: number, imageH: number, viewW: number, viewH: number): ViewTransform {
    const zoom = Math.min(viewW / imageW, viewH / imageH);
    return new ViewTransform(
      zoom,
      (viewW - imageW * zoom) / 2,
      (viewH - imageH * zoom) / 2,
    );
  }
}
