/** Closed vocabulary shared with the synthetic-scene renders: each category
 * is drawn as a flat rectangle of one fixed palette color on white. */

export type RGB = readonly [number, number, number];

export const CANVAS = { width: 320, height: 240 } as const;

export const CATEGORY_COLORS: Record<string, string> = {
  dog: "brown",
  cat: "orange",
  car: "red",
  bus: "yellow",
  tree: "green",
  chair: "blue",
  person: "pink",
  bottle: "purple",
  laptop: "gray",
  ball: "black",
};

export const COLOR_RGB: Record<string, RGB> = {
  brown: [139, 69, 19],
  orange: [255, 140, 0],
  red: [220, 20, 60],
  yellow: [255, 215, 0],
  green: [34, 139, 34],
  blue: [30, 80, 220],
  pink: [255, 182, 193],
  purple: [128, 0, 180],
  gray: [128, 128, 128],
  black: [20, 20, 20],
};

/** Lowercase, spaces to "_", everything but [a-z0-9_] stripped. Idempotent. */
export function normalizeConcept(phrase: string): string {
  return phrase
    .trim()
    .toLowerCase()
    .replace(/\s+/g, "_")
    .replace(/[^a-z0-9_]/g, "");
}

/** Palette color for a concept, or null when the concept names no category. */
export function conceptRGB(concept: string): RGB | null {
  const color = CATEGORY_COLORS[normalizeConcept(concept)];
  return color ? COLOR_RGB[color] : null;
}
