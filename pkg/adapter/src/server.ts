/**
 * HTTP surface of the adapter: routes, validation, and error mapping.
 *
 * Status discipline: malformed bodies and unknown routes are the
 * caller's fault and come back 400/404 with retryable=false; provider
 * failures (a model that ran out of memory, a generator that is still
 * loading) come back 503 with retryable=true so clients back off and
 * retry.
 */

import express from "express";
import type { Express, NextFunction, Request, Response } from "express";
import { ZodError } from "zod";

import { GenerationCache } from "./cache.js";
import {
  logitsRequestSchema,
  transformRequestSchema,
  txt2imgRequestSchema,
} from "./protocol.js";
import type { WireError } from "./protocol.js";
import {
  DEFAULT_CONFIG,
  EchoProvider,
  ProviderError,
} from "./provider.js";
import type { AdapterConfig, ImageProvider, LogitsProvider } from "./provider.js";

export interface AdapterService {
  app: Express;
  cache: GenerationCache;
  config: AdapterConfig;
}

function sendError(
  res: Response,
  status: number,
  message: string,
  retryable: boolean,
): void {
  const doc: WireError = { error: message, retryable };
  res.status(status).json(doc);
}

function describeZodError(err: ZodError): string {
  const issue = err.issues[0];
  if (issue === undefined) {
    return "invalid body";
  }
  const where = issue.path.join(".") || "body";
  return `${where}: ${issue.message}`;
}

export function buildService(
  config: Partial<AdapterConfig> = {},
  providers?: { logits: LogitsProvider; images: ImageProvider },
): AdapterService {
  const fullConfig: AdapterConfig = { ...DEFAULT_CONFIG, ...config };
  if (providers === undefined) {
    if (!fullConfig.echo) {
      throw new Error(
        "no real-model providers are bundled; start with --echo or inject providers",
      );
    }
    const echo = new EchoProvider();
    providers = { logits: echo, images: echo };
  }
  const { logits, images } = providers;
  const generatorId = fullConfig.echo ? "echo" : fullConfig.generator;
  const cache = new GenerationCache(generatorId);

  const app = express();
  app.use(express.json({ limit: "8mb" }));

  app.get("/meta", (_req, res) => {
    res.json(logits.meta());
  });

  app.post("/logits", (req, res, next) => {
    const body = logitsRequestSchema.parse(req.body);
    logits
      .logits(body.image_ref, body.prompt, body.prefix_ids)
      .then((wire) => res.json({ logits: wire }))
      .catch(next);
  });

  app.post("/txt2img", (req, res, next) => {
    const body = txt2imgRequestSchema.parse(req.body);
    const steps = body.steps ?? fullConfig.defaultSteps;
    cache
      .generate(
        () => images.txt2img(body.caption, body.seed, steps),
        body.caption,
        body.seed,
        steps,
        body.request_id,
      )
      .then((ref) => res.json({ image_ref: ref }))
      .catch(next);
  });

  app.post("/transform", (req, res, next) => {
    const body = transformRequestSchema.parse(req.body);
    images
      .transform(body.image_ref, body.kind, body.param)
      .then((ref) => res.json({ image_ref: ref }))
      .catch(next);
  });

  app.use((_req, res) => {
    sendError(res, 404, "no such route", false);
  });

  app.use((err: unknown, _req: Request, res: Response, _next: NextFunction) => {
    if (err instanceof ZodError) {
      sendError(res, 400, describeZodError(err), false);
    } else if (err instanceof ProviderError) {
      sendError(res, 503, err.message, err.retryable);
    } else if (err instanceof SyntaxError && "body" in (err as object)) {
      sendError(res, 400, "invalid JSON", false);
    } else {
      sendError(res, 500, "internal error", true);
    }
  });

  return { app, cache, config: fullConfig };
}
