/**
 * Generation cache for /txt2img.
 *
 * Two layers, checked in order:
 *
 * 1. request id — a replayed request_id (a client retrying after a
 *    dropped response) returns the previous image_ref without re-running
 *    generation;
 * 2. content key — SHA-256 of (caption, seed, steps, generator id), so
 *    semantically identical requests share one generation even when
 *    their request ids differ.
 *
 * Both layers fill on every successful generation.
 */

import { createHash } from "node:crypto";

export class GenerationCache {
  private readonly byRequestId = new Map<string, string>();
  private readonly byContentKey = new Map<string, string>();
  private readonly generatorId: string;
  /** Number of times the underlying generator actually ran. */
  executions = 0;

  constructor(generatorId: string) {
    this.generatorId = generatorId;
  }

  private contentKey(caption: string, seed: number, steps: number): string {
    return createHash("sha256")
      .update(JSON.stringify([caption, seed, steps, this.generatorId]), "utf8")
      .digest("hex");
  }

  async generate(
    run: () => Promise<string>,
    caption: string,
    seed: number,
    steps: number,
    requestId?: string,
  ): Promise<string> {
    if (requestId !== undefined) {
      const replayed = this.byRequestId.get(requestId);
      if (replayed !== undefined) {
        return replayed;
      }
    }
    const key = this.contentKey(caption, seed, steps);
    let ref = this.byContentKey.get(key);
    if (ref === undefined) {
      ref = await run();
      this.executions += 1;
      this.byContentKey.set(key, ref);
    }
    if (requestId !== undefined) {
      this.byRequestId.set(requestId, ref);
    }
    return ref;
  }
}
