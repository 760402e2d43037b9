import { parseArgs } from "node:util";
import * as path from "path";
import { Detector } from "./detect";
import { Mode, serve } from "./server";

function loadDetector(impl: string): Detector {
  const mod = require(path.resolve(impl));
  const detector = mod.detector ?? mod.default;
  if (!detector || typeof detector.detect !== "function" || typeof detector.name !== "string") {
    throw new Error(`${impl} does not export a detector ({ name, detect })`);
  }
  return detector;
}

function main(): void {
  const { values } = parseArgs({
    options: {
      port: { type: "string", default: "8601" },
      mode: { type: "string", default: "toy" },
      impl: { type: "string" },
    },
  });
  const mode = values.mode as string;
  if (mode !== "toy" && mode !== "real") {
    console.error(`unknown mode "${mode}"; expected "toy" or "real"`);
    process.exit(2);
  }
  const port = Number(values.port);
  if (!Number.isInteger(port) || port < 0 || port > 65535) {
    console.error(`bad port ${values.port}`);
    process.exit(2);
  }
  try {
    serve({
      mode: mode as Mode,
      port,
      detector: values.impl ? loadDetector(values.impl) : undefined,
    });
  } catch (exc) {
    console.error(String(exc));
    process.exit(2);
  }
}

main();
