import { z } from "zod";
import { DetectedInstance } from "./detect";
import { maskBBox, rleEncode } from "./rle";

/** Wire schemas for POST /v1/segment. The request image is base64 PNG bytes
 * or a server-visible path; bboxes are half-open [x0, y0, x1, y1] in pixels;
 * RLE runs are row-major background/foreground lengths, background first. */

export const SegmentRequestSchema = z.object({
  image: z.string().min(1),
  concept: z.string().min(1),
  max_instances: z.number().int().min(0),
  min_score: z.number().min(0).max(1),
});

export type SegmentRequest = z.infer<typeof SegmentRequestSchema>;

export const RleMaskSchema = z.object({
  format: z.literal("rle"),
  data: z.array(z.number().int().min(0)),
});

export const PolygonMaskSchema = z.object({
  format: z.literal("polygon"),
  data: z.array(z.array(z.number())),
});

export const InstanceSchema = z.object({
  score: z.number().min(0).max(1),
  bbox: z.tuple([z.number(), z.number(), z.number(), z.number()]),
  mask: z.union([RleMaskSchema, PolygonMaskSchema]),
});

export const SegmentResponseSchema = z.object({
  instances: z.array(InstanceSchema),
  model: z.string().min(1),
});

export type WireInstance = z.infer<typeof InstanceSchema>;
export type SegmentResponse = z.infer<typeof SegmentResponseSchema>;

export function requestProblem(body: unknown): string | null {
  const result = SegmentRequestSchema.safeParse(body);
  if (result.success) return null;
  return result.error.issues
    .map((issue) => `${issue.path.join(".") || "body"}: ${issue.message}`)
    .join("; ");
}

/** Apply the contract's score filter, descending sort, and instance cap, then
 * serialize masks as RLE. The bbox is derived from the mask's tight bounds,
 * so mask-decodes-to-bbox holds for any detector; empty masks are dropped. */
export function buildResponse(
  detections: DetectedInstance[],
  request: Pick<SegmentRequest, "min_score" | "max_instances">,
  width: number,
  model: string,
): SegmentResponse {
  const kept = detections.filter((d) => d.score >= request.min_score);
  kept.sort((a, b) => b.score - a.score);
  const instances: WireInstance[] = [];
  for (const det of kept.slice(0, request.max_instances)) {
    const bbox = maskBBox(det.mask, width);
    if (!bbox) continue;
    instances.push({
      score: det.score,
      bbox,
      mask: { format: "rle", data: rleEncode(det.mask) },
    });
  }
  return { instances, model };
}
