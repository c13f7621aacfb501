/** Pure mask-to-pixels rendering, kept DOM-free so tests can run in node. */

import type { Rgb } from "./color.js";
import { decodeRle, Runs } from "./rle.js";

/**
 * Paint one mask as translucent RGBA over a transparent buffer sized to the
 * image. The caller hands the buffer to ImageData/putImageData.
 */
export function renderOverlay(runs: Runs, width: number, height: number,
                              color: Rgb, alpha = 150) {
  const mask = decodeRle(runs, width, height);
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      const o = i * 4;
      out[o] = color[0];
      out[o + 1] = color[1];
      out[o + 2] = color[2];
      out[o + 3] = alpha;
    }
  }
  return out;
}

/** Foreground pixel indices of a rendered overlay (alpha > 0). */
export function overlayPixels(rgba: Uint8ClampedArray): Set<number> {
  const set = new Set<number>();
  for (let i = 3; i < rgba.length; i += 4) {
    if (rgba[i] > 0) set.add((i - 3) / 4);
  }
  return set;
}
