/**
 * Provider seam between the HTTP surface and whatever produces logits
 * and images.
 *
 * The echo provider is the only one bundled: it is deterministic,
 * needs no downloads, and is safe to call concurrently. Real model
 * wrappers implement the same two interfaces and are typically wrapped
 * in `serialized(...)` so concurrent HTTP requests queue for the single
 * model instance instead of contending for it.
 */

import {
  echoLogitsWire,
  echoMeta,
  echoTransformRef,
  echoTxt2ImgRef,
} from "./echo.js";
import type { AdapterMeta, WireLogit } from "./protocol.js";

/** Thrown by providers; maps to HTTP 503 with the given retryability. */
export class ProviderError extends Error {
  readonly retryable: boolean;

  constructor(message: string, retryable = true) {
    super(message);
    this.name = "ProviderError";
    this.retryable = retryable;
  }
}

export interface LogitsProvider {
  meta(): AdapterMeta;
  logits(
    imageRef: string | null,
    prompt: string,
    prefixIds: number[],
  ): Promise<WireLogit[]>;
}

export interface ImageProvider {
  txt2img(caption: string, seed: number, steps: number): Promise<string>;
  transform(
    imageRef: string,
    kind: "distort" | "augment",
    param: number,
  ): Promise<string>;
}

export interface AdapterConfig {
  /** Vision-language checkpoint identifier (real providers only). */
  model: string;
  /** Text-to-image checkpoint identifier (real providers only). */
  generator: string;
  device: string;
  /** Where real providers persist generated images; echo mode ignores it. */
  cacheDir: string;
  echo: boolean;
  /** Used when a /txt2img body omits `steps`. */
  defaultSteps: number;
}

export const DEFAULT_CONFIG: AdapterConfig = {
  model: "",
  generator: "",
  device: "cpu",
  cacheDir: ".image-cache",
  echo: false,
  defaultSteps: 50,
};

export class EchoProvider implements LogitsProvider, ImageProvider {
  meta(): AdapterMeta {
    return echoMeta();
  }

  async logits(
    imageRef: string | null,
    prompt: string,
    prefixIds: number[],
  ): Promise<WireLogit[]> {
    return echoLogitsWire(imageRef, prompt, prefixIds);
  }

  async txt2img(caption: string, seed: number, steps: number): Promise<string> {
    return echoTxt2ImgRef(caption, seed, steps);
  }

  async transform(
    imageRef: string,
    kind: "distort" | "augment",
    param: number,
  ): Promise<string> {
    return echoTransformRef(imageRef, kind, param);
  }
}

/**
 * Serialize all calls through a promise chain: at most one underlying
 * call runs at a time, in arrival order. A rejected call does not poison
 * the chain.
 */
export function serialized<T extends object>(target: T): T {
  let tail: Promise<unknown> = Promise.resolve();
  const handler: ProxyHandler<T> = {
    get(obj, prop, receiver) {
      const value = Reflect.get(obj, prop, receiver);
      if (typeof value !== "function") {
        return value;
      }
      return (...args: unknown[]) => {
        const run = tail.then(() => value.apply(obj, args));
        tail = run.catch(() => undefined);
        return run;
      };
    },
  };
  return new Proxy(target, handler);
}
