/** Pixel <-> normalized coordinate conversion for the layout editor.
 *
 * Normalized boxes are fractions of the page raster; the editor works in
 * display pixels (page pixels scaled by the zoom factor). Round-tripping
 * stays within half a display pixel.
 */

import type { Bbox } from "./types.js";

export interface PixelRect {
  x: number;
  y: number;
  width: number;
  height: number;
}

export function pixelToNormalized(
  rect: PixelRect,
  pageWidthPx: number,
  pageHeightPx: number,
  zoom = 1,
): Bbox {
  const w = pageWidthPx * zoom;
  const h = pageHeightPx * zoom;
  return [rect.x / w, rect.y / h, rect.width / w, rect.height / h];
}

export function normalizedToPixel(
  bbox: Bbox,
  pageWidthPx: number,
  pageHeightPx: number,
  zoom = 1,
): PixelRect {
  const w = pageWidthPx * zoom;
  const h = pageHeightPx * zoom;
  return {
    x: bbox[0] * w,
    y: bbox[1] * h,
    width: bbox[2] * w,
    height: bbox[3] * h,
  };
}

/** Normalize a drag gesture (any corner pair) into a positive rect, clamped
 * to the page. */
export function dragToRect(
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  maxWidth: number,
  maxHeight: number,
): PixelRect {
  const clampX = (v: number) => Math.min(Math.max(v, 0), maxWidth);
  const clampY = (v: number) => Math.min(Math.max(v, 0), maxHeight);
  const ax = clampX(Math.min(x0, x1));
  const ay = clampY(Math.min(y0, y1));
  const bx = clampX(Math.max(x0, x1));
  const by = clampY(Math.max(y0, y1));
  return { x: ax, y: ay, width: bx - ax, height: by - ay };
}
