/**
 * Wire protocol shapes.
 *
 * Four routes: GET /meta, POST /logits, POST /txt2img, POST /transform.
 * Bodies are JSON; logit vectors are arrays with one entry per
 * vocabulary token, masked slots encoded as the JSON string "-inf".
 * Seeds stay below 2**53 so every peer parses them exactly.
 */

import { z } from "zod";

export const MAX_EXACT_INTEGER = 2 ** 53 - 1;

/** One slot of a logits response: a finite number, or "-inf" when masked. */
export type WireLogit = number | "-inf";

export interface AdapterMeta {
  vocab_size: number;
  eos_id: number;
  model_name: string;
  generator_name: string;
  logit_dtype: string;
  deterministic: boolean;
}

const exactInt = z.number().int().min(0).max(MAX_EXACT_INTEGER);

export const logitsRequestSchema = z
  .object({
    image_ref: z.string().nullable().optional().default(null),
    prompt: z.string(),
    prefix_ids: z.array(z.number().int().min(0)),
    request_id: z.string().optional(),
  })
  .strict();

export const txt2imgRequestSchema = z
  .object({
    caption: z.string().min(1, "caption required"),
    seed: exactInt,
    steps: z.number().int().positive().optional(),
    request_id: z.string().optional(),
  })
  .strict();

export const transformRequestSchema = z
  .object({
    image_ref: z.string().min(1, "image_ref required"),
    kind: z.enum(["distort", "augment"]),
    param: z.number().int().min(0),
    request_id: z.string().optional(),
  })
  .strict();

export type LogitsRequest = z.infer<typeof logitsRequestSchema>;
export type Txt2ImgRequest = z.infer<typeof txt2imgRequestSchema>;
export type TransformRequest = z.infer<typeof transformRequestSchema>;

/** Error document for non-2xx responses. */
export interface WireError {
  error: string;
  retryable: boolean;
}
