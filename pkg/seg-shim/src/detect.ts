import { DecodedImage } from "./image";
import { conceptRGB } from "./palette";

/** One raw detection: confidence plus a flat binary mask over the canvas. */
export interface DetectedInstance {
  score: number;
  mask: Uint8Array;
}

export interface Detector {
  name: string;
  detect(image: DecodedImage, concept: string): DetectedInstance[];
}

const TOY_SCORE = 0.99;

/** Connected components (4-connectivity) of pixels matching `rgb`, in raster
 * order of their first pixel. Returns [mask, pixelCount, bboxArea] triples. */
function components(img: DecodedImage, rgb: readonly [number, number, number]) {
  const { width, height, data } = img;
  const match = new Uint8Array(width * height);
  for (let i = 0, p = 0; i < match.length; i++, p += 4) {
    if (data[p] === rgb[0] && data[p + 1] === rgb[1] && data[p + 2] === rgb[2]) match[i] = 1;
  }
  const seen = new Uint8Array(width * height);
  const out: Array<{ mask: Uint8Array; count: number; area: number }> = [];
  for (let start = 0; start < match.length; start++) {
    if (!match[start] || seen[start]) continue;
    const mask = new Uint8Array(width * height);
    const stack = [start];
    seen[start] = 1;
    let count = 0;
    let x0 = width, y0 = height, x1 = -1, y1 = -1;
    while (stack.length) {
      const i = stack.pop()!;
      mask[i] = 1;
      count++;
      const x = i % width;
      const y = (i - x) / width;
      if (x < x0) x0 = x;
      if (y < y0) y0 = y;
      if (x > x1) x1 = x;
      if (y > y1) y1 = y;
      if (x > 0 && match[i - 1] && !seen[i - 1]) { seen[i - 1] = 1; stack.push(i - 1); }
      if (x + 1 < width && match[i + 1] && !seen[i + 1]) { seen[i + 1] = 1; stack.push(i + 1); }
      if (y > 0 && match[i - width] && !seen[i - width]) { seen[i - width] = 1; stack.push(i - width); }
      if (y + 1 < height && match[i + width] && !seen[i + width]) { seen[i + width] = 1; stack.push(i + width); }
    }
    out.push({ mask, count, area: (x1 - x0 + 1) * (y1 - y0 + 1) });
  }
  return out;
}

/** Flat-color rectangle detector for synthetic white-canvas renders: finds
 * connected regions of the concept's palette color and keeps the ones that
 * exactly fill their bounding box. Every detection scores 0.99. */
export function toyDetect(image: DecodedImage, concept: string): DetectedInstance[] {
  const rgb = conceptRGB(concept);
  if (!rgb) return [];
  return components(image, rgb)
    .filter((c) => c.count === c.area)
    .map((c) => ({ score: TOY_SCORE, mask: c.mask }));
}

export const toyDetector: Detector = { name: "seg-shim-toy", detect: toyDetect };
