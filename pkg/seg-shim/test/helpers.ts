import { PNG } from "pngjs";
import { DecodedImage } from "../src/image";
import { RGB } from "../src/palette";

export type Rect = [number, number, number, number]; // half-open [x0, y0, x1, y1]

/** White canvas with flat-color rectangles, as an RGBA pixel buffer. */
export function makeImage(width: number, height: number, rects: Array<[Rect, RGB]>): DecodedImage {
  const data = new Uint8Array(width * height * 4).fill(255);
  for (const [[x0, y0, x1, y1], rgb] of rects) {
    for (let y = y0; y < y1; y++) {
      for (let x = x0; x < x1; x++) {
        const p = (y * width + x) * 4;
        data[p] = rgb[0];
        data[p + 1] = rgb[1];
        data[p + 2] = rgb[2];
      }
    }
  }
  return { width, height, data };
}

export function toPngBase64(img: DecodedImage): string {
  const png = new PNG({ width: img.width, height: img.height });
  Buffer.from(img.data).copy(png.data);
  return PNG.sync.write(png).toString("base64");
}

export function maskFromRect(width: number, height: number, rect: Rect): Uint8Array {
  const mask = new Uint8Array(width * height);
  for (let y = rect[1]; y < rect[3]; y++) mask.fill(1, y * width + rect[0], y * width + rect[2]);
  return mask;
}

/** Deterministic PRNG for fuzz cases (mulberry32). */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}
