/**
 * Echo-mode semantics: every response is a pure function of the
 * request, so protocol contract tests run with no models loaded and
 * independent implementations agree to the bit.
 *
 * Canonical form of a request is compact JSON (no spaces, UTF-8) of a
 * tagged field list, e.g. ["logits", image_ref, prompt, prefix_ids].
 *
 * /logits: let D = SHA-256 hex of the canonical form. For token i,
 * h_i = SHA-256 hex of `${D}:${i}` and u32_i = first 8 hex chars of
 * h_i as an integer. Token i is masked iff u32_i % 97 === 0; otherwise
 * its logit is (u32_i >> 8) / 2**21 - 4.0, a value in [-4, 4) exactly
 * representable in float32 (and therefore exact through JSON in both
 * directions). If every token masks (not reachable at vocabulary 32,
 * but defined), token 0 is unmasked with logit 0.0.
 *
 * Image refs: "echo-img-" + first 16 hex chars of the SHA-256 of the
 * canonical form, with forms ["txt2img", caption, seed, steps] and
 * ["transform", image_ref, kind, param].
 */

import { createHash } from "node:crypto";

import type { AdapterMeta, WireLogit } from "./protocol.js";

export const ECHO_VOCAB_SIZE = 32;
export const ECHO_EOS_ID = 0;
export const ECHO_MODEL_NAME = "echo-model";
export const ECHO_GENERATOR_NAME = "echo-generator";
export const ECHO_MASK_MODULUS = 97;

type CanonicalPart = string | number | null | number[];

export function canonicalForm(parts: CanonicalPart[]): string {
  // JSON.stringify emits compact JSON with the same escaping rules as
  // the canonical form requires for this value space (strings, null,
  // exact integers, flat arrays).
  return JSON.stringify(parts);
}

function sha256Hex(text: string): string {
  return createHash("sha256").update(text, "utf8").digest("hex");
}

export function echoLogitsWire(
  imageRef: string | null,
  prompt: string,
  prefixIds: number[],
): WireLogit[] {
  const digest = sha256Hex(canonicalForm(["logits", imageRef, prompt, prefixIds]));
  const wire: WireLogit[] = [];
  let sawUnmasked = false;
  for (let i = 0; i < ECHO_VOCAB_SIZE; i++) {
    const h = sha256Hex(`${digest}:${i}`);
    const u32 = parseInt(h.slice(0, 8), 16);
    if (u32 % ECHO_MASK_MODULUS === 0) {
      wire.push("-inf");
    } else {
      wire.push((u32 >>> 8) / 2 ** 21 - 4.0);
      sawUnmasked = true;
    }
  }
  if (!sawUnmasked) {
    wire[0] = 0.0;
  }
  return wire;
}

function echoImageRef(tag: string, fields: CanonicalPart[]): string {
  const digest = sha256Hex(canonicalForm([tag, ...fields]));
  return `echo-img-${digest.slice(0, 16)}`;
}

export function echoTxt2ImgRef(caption: string, seed: number, steps: number): string {
  return echoImageRef("txt2img", [caption, seed, steps]);
}

export function echoTransformRef(
  imageRef: string,
  kind: "distort" | "augment",
  param: number,
): string {
  return echoImageRef("transform", [imageRef, kind, param]);
}

export function echoMeta(): AdapterMeta {
  return {
    vocab_size: ECHO_VOCAB_SIZE,
    eos_id: ECHO_EOS_ID,
    model_name: ECHO_MODEL_NAME,
    generator_name: ECHO_GENERATOR_NAME,
    logit_dtype: "f32",
    deterministic: true,
  };
}
