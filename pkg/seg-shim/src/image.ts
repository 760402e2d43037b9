import * as fs from "fs";
import { PNG } from "pngjs";

/** Decoded image: RGBA pixel buffer as produced by pngjs. */
export interface DecodedImage {
  width: number;
  height: number;
  data: Uint8Array; // 4 bytes per pixel, row-major
}

export class ImageDecodeError extends Error {}

function parsePng(bytes: Buffer): DecodedImage {
  const png = PNG.sync.read(bytes);
  return { width: png.width, height: png.height, data: png.data };
}

const BASE64_RE = /^[A-Za-z0-9+/]+={0,2}$/;

/** Decode the wire image field: base64 PNG bytes, or a server-visible path. */
export function decodeImageField(image: string): DecodedImage {
  const compact = image.replace(/\s+/g, "");
  if (compact.length % 4 === 0 && BASE64_RE.test(compact)) {
    try {
      return parsePng(Buffer.from(compact, "base64"));
    } catch {
      // fall through to the path interpretation
    }
  }
  let bytes: Buffer;
  try {
    bytes = fs.readFileSync(image);
  } catch {
    throw new ImageDecodeError("image is neither base64 PNG data nor a readable file");
  }
  try {
    return parsePng(bytes);
  } catch (exc) {
    throw new ImageDecodeError(`cannot decode PNG file ${image}: ${exc}`);
  }
}
