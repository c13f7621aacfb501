/**
 * Run-length masks as served by the annotation API: a flat list of
 * [start, length, start, length, ...] pairs over row-major pixel indices.
 * An empty list is an empty mask.
 */

export type Runs = number[];

/** Decode runs into a dense 0/1 mask of width*height bytes. */
export function decodeRle(runs: Runs, width: number, height: number): Uint8Array {
  if (width <= 0 || height <= 0) {
    throw new Error(`bad mask size ${width}x${height}`);
  }
  if (runs.length % 2 !== 0) {
    throw new Error("runs must be (start, length) pairs");
  }
  const size = width * height;
  const mask = new Uint8Array(size);
  for (let i = 0; i < runs.length; i += 2) {
    const start = runs[i];
    const length = runs[i + 1];
    if (start < 0 || length < 0 || start + length > size) {
      throw new Error(`run [${start}, ${length}] outside ${size}-px raster`);
    }
    mask.fill(1, start, start + length);
  }
  return mask;
}

/** Total foreground pixels without materializing the mask. */
export function pixelCount(runs: Runs): number {
  let n = 0;
  for (let i = 1; i < runs.length; i += 2) n += runs[i];
  return n;
}

/** Encode a dense 0/1 mask; inverse of decodeRle. Used by tests. */
export function encodeRle(mask: Uint8Array): Runs {
  const runs: Runs = [];
  let start = -1;
  for (let i = 0; i <= mask.length; i++) {
    const on = i < mask.length && mask[i] !== 0;
    if (on && start < 0) start = i;
    if (!on && start >= 0) {
      runs.push(start, i - start);
      start = -1;
    }
  }
  return runs;
}
