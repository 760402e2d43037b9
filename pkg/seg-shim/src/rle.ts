/** Run-length coding for binary masks, row-major, alternating
 * background/foreground run lengths starting with background.
 *
 * An all-background mask encodes as [width*height]; a mask whose first pixel
 * is foreground gets a leading zero-length background run. Masks are flat
 * Uint8Arrays (0 = background, nonzero = foreground) of width*height pixels.
 */

export type BBox = [number, number, number, number];

export function rleEncode(mask: Uint8Array): number[] {
  if (mask.length === 0) return [];
  const runs: number[] = [];
  let value = mask[0] !== 0;
  let length = 0;
  for (let i = 0; i < mask.length; i++) {
    if ((mask[i] !== 0) === value) {
      length++;
    } else {
      runs.push(length);
      value = !value;
      length = 1;
    }
  }
  runs.push(length);
  if (mask[0] !== 0) runs.unshift(0);
  return runs;
}

export function rleDecode(runs: number[], width: number, height: number): Uint8Array {
  let total = 0;
  for (const run of runs) {
    if (run < 0 || !Number.isInteger(run)) throw new Error("RLE runs must be non-negative integers");
    total += run;
  }
  if (total !== width * height) {
    throw new Error(`RLE runs sum to ${total}, expected ${width * height}`);
  }
  const mask = new Uint8Array(width * height);
  let pos = 0;
  let value = false;
  for (const run of runs) {
    if (value) mask.fill(1, pos, pos + run);
    pos += run;
    value = !value;
  }
  return mask;
}

/** Tight half-open [x0, y0, x1, y1] around set pixels, or null if none. */
export function maskBBox(mask: Uint8Array, width: number): BBox | null {
  let x0 = Infinity;
  let y0 = Infinity;
  let x1 = -Infinity;
  let y1 = -Infinity;
  for (let i = 0; i < mask.length; i++) {
    if (mask[i] === 0) continue;
    const x = i % width;
    const y = (i - x) / width;
    if (x < x0) x0 = x;
    if (y < y0) y0 = y;
    if (x > x1) x1 = x;
    if (y > y1) y1 = y;
  }
  if (x1 < 0) return null;
  return [x0, y0, x1 + 1, y1 + 1];
}
