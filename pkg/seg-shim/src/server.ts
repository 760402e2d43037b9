import express, { Express, NextFunction, Request, Response } from "express";
import * as http from "http";
import { buildResponse, requestProblem } from "./contract";
import { Detector, toyDetector } from "./detect";
import { decodeImageField, ImageDecodeError } from "./image";

export type Mode = "toy" | "real";

export interface AppOptions {
  mode: Mode;
  /** Adapter for real mode. No model weights ship with this package, so real
   * mode refuses to start without one; toy mode ignores it. */
  detector?: Detector;
}

export function createApp(options: AppOptions): Express {
  let detector: Detector;
  if (options.mode === "toy") {
    detector = toyDetector;
  } else if (options.detector) {
    detector = options.detector;
  } else {
    throw new Error("real mode needs a detector adapter; no model weights are bundled");
  }

  const app = express();
  app.use(express.json({ limit: "32mb" }));

  app.get("/healthz", (_req, res) => {
    res.json({ status: "ok", mode: options.mode, model: detector.name });
  });

  app.post("/v1/segment", (req, res) => {
    const problem = requestProblem(req.body);
    if (problem) {
      res.status(400).json({ error: problem });
      return;
    }
    const body = req.body as {
      image: string;
      concept: string;
      max_instances: number;
      min_score: number;
    };
    let image;
    try {
      image = decodeImageField(body.image);
    } catch (exc) {
      if (exc instanceof ImageDecodeError) {
        res.status(400).json({ error: exc.message });
        return;
      }
      throw exc;
    }
    const detections = detector.detect(image, body.concept);
    res.json(buildResponse(detections, body, image.width, detector.name));
  });

  // Malformed JSON from the body parser lands here; keep the error JSON shape.
  app.use((err: Error, _req: Request, res: Response, next: NextFunction) => {
    if (res.headersSent) {
      next(err);
      return;
    }
    const status = err instanceof SyntaxError ? 400 : 500;
    res.status(status).json({ error: err.message });
  });

  return app;
}

export function serve(options: AppOptions & { port: number }): http.Server {
  const app = createApp(options);
  return app.listen(options.port, () => {
    console.log(`seg-shim (${options.mode}) listening on :${options.port}`);
  });
}
