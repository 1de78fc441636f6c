"""HTTP client for the model-adapter wire protocol.

One client serves both backend roles: next-token logits (plus image
distortion/augmentation handles) and text-to-image generation. All
routes speak JSON over HTTP/1.1 relative to a base URL:

- ``GET  /meta``      -> vocabulary size, EOS id, model names, dtype
- ``POST /logits``    -> ``{"logits": [number | "-inf", ...]}``
- ``POST /txt2img``   -> ``{"image_ref": str}``
- ``POST /transform`` -> ``{"image_ref": str}`` (distort or augment)

Masked logits travel as the JSON string ``"-inf"``; any non-finite
number in a payload is a protocol violation.

Reliability contract: requests that time out or fail retryably are
retried up to ``max_retries`` times with exponential backoff (base 0.5 s,
factor 2, plus jitter); at most ``max_in_flight`` requests are in flight
per client; cached ``/meta`` older than 60 s is re-probed before use, and
a vocabulary-size change mid-session is a fatal protocol error.

Idempotency: POST bodies carry a request id derived from a digest of the
route and payload, so a retry replays the same id and the adapter can
deduplicate. Error responses are ``{"error": str, "retryable": bool}``;
absent the field, 5xx counts as retryable and 4xx does not.

The ``sleep`` and ``clock`` hooks exist for tests; production code uses
the defaults.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import httpx
import numpy as np

from degf.errors import (
    BackendUnavailableError,
    DegenerateDistributionError,
    GeneratorUnavailableError,
    ProtocolError,
    ValidationError,
)
from degf.vectors import LogitVector, Vocabulary

BACKOFF_BASE_S = 0.5
BACKOFF_FACTOR = 2.0
META_STALENESS_S = 60.0


@dataclass(frozen=True)
class AdapterEndpoint:
    base_url: str
    logits_timeout_s: float = 30.0
    generate_timeout_s: float = 120.0
    max_retries: int = 2
    max_in_flight: int = 4

    def __post_init__(self):
        if not (self.base_url.startswith("http://") or self.base_url.startswith("https://")):
            raise ValidationError(f"base_url must be http(s), got {self.base_url!r}")
        if self.logits_timeout_s <= 0 or self.generate_timeout_s <= 0:
            raise ValidationError("timeouts must be positive")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be >= 1")


def request_id_for(route: str, payload: dict) -> str:
    """Content-derived request id: identical logical requests (and their
    retries) share an id, enabling server-side deduplication."""
    body = json.dumps(
        [route, payload], sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    return hashlib.blake2b(body, digest_size=16).hexdigest()


class AdapterClient:
    """Thread-safe client; implements the model-backend and
    visual-generator interfaces over the wire."""

    def __init__(
        self,
        endpoint: AdapterEndpoint,
        *,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.endpoint = endpoint
        self._http = httpx.Client(base_url=endpoint.base_url, transport=transport)
        self._sem = threading.BoundedSemaphore(endpoint.max_in_flight)
        self._sleep = sleep
        self._clock = clock
        self._jitter = random.Random(0)
        self._meta_lock = threading.Lock()
        self._meta: Optional[dict] = None
        self._meta_at: float = float("-inf")

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "AdapterClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- transport ---------------------------------------------------

    def _request(
        self,
        method: str,
        route: str,
        payload: Optional[dict],
        timeout_s: float,
        unavailable: type,
    ) -> dict:
        delay = BACKOFF_BASE_S
        last_error = "unknown error"
        for attempt in range(self.endpoint.max_retries + 1):
            try:
                with self._sem:
                    response = self._http.request(
                        method, route, json=payload, timeout=timeout_s
                    )
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                retryable = True
            else:
                if response.status_code == 200:
                    try:
                        doc = response.json()
                    except (json.JSONDecodeError, ValueError) as exc:
                        raise ProtocolError(
                            f"{route}: response is not valid JSON: {exc}"
                        ) from exc
                    if not isinstance(doc, dict):
                        raise ProtocolError(f"{route}: response must be a JSON object")
                    return doc
                retryable = 500 <= response.status_code < 600
                reason = f"HTTP {response.status_code}"
                try:
                    body = response.json()
                    if isinstance(body, dict):
                        if "error" in body:
                            reason = f"{reason}: {body['error']}"
                        if isinstance(body.get("retryable"), bool):
                            retryable = body["retryable"]
                except (json.JSONDecodeError, ValueError):
                    pass
                last_error = reason
                if not retryable:
                    if 400 <= response.status_code < 500:
                        raise ProtocolError(f"{route}: {reason}")
                    raise unavailable(f"{route}: {reason}")
            if attempt < self.endpoint.max_retries:
                self._sleep(delay + self._jitter.uniform(0.0, delay / 2.0))
                delay *= BACKOFF_FACTOR
        raise unavailable(
            f"{route}: giving up after {self.endpoint.max_retries + 1} attempts "
            f"({last_error})"
        )

    # -- meta / health -----------------------------------------------

    def meta(self, force: bool = False) -> dict:
        """Cached /meta, re-probed when stale; a mid-session vocab_size
        change is fatal."""
        with self._meta_lock:
            fresh = self._clock() - self._meta_at <= META_STALENESS_S
            if self._meta is not None and fresh and not force:
                return self._meta
            doc = self._request(
                "GET", "/meta", None, self.endpoint.logits_timeout_s,
                BackendUnavailableError,
            )
            try:
                vocab_size = int(doc["vocab_size"])
                eos_id = int(doc["eos_id"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"/meta: malformed payload: {exc!r}") from exc
            if vocab_size < 2 or not 0 <= eos_id < vocab_size:
                raise ProtocolError(
                    f"/meta: invalid vocab_size={vocab_size} eos_id={eos_id}"
                )
            if self._meta is not None and self._meta["vocab_size"] != vocab_size:
                raise ProtocolError(
                    f"/meta: vocab_size changed mid-session "
                    f"({self._meta['vocab_size']} -> {vocab_size})"
                )
            self._meta = doc
            self._meta_at = self._clock()
            return doc

    def vocabulary(self) -> Vocabulary:
        doc = self.meta()
        return Vocabulary(size=int(doc["vocab_size"]), eos_id=int(doc["eos_id"]))

    # -- model backend -----------------------------------------------

    def logits(
        self, image_ref: Optional[str], prompt: str, prefix_ids: Sequence[int]
    ) -> LogitVector:
        meta = self.meta()
        payload = {
            "image_ref": image_ref,
            "prompt": prompt,
            "prefix_ids": [int(t) for t in prefix_ids],
        }
        payload = {"request_id": request_id_for("/logits", payload), **payload}
        doc = self._request(
            "POST", "/logits", payload, self.endpoint.logits_timeout_s,
            BackendUnavailableError,
        )
        raw = doc.get("logits")
        if not isinstance(raw, list):
            raise ProtocolError("/logits: payload missing 'logits' array")
        vocab_size = int(meta["vocab_size"])
        if len(raw) != vocab_size:
            raise ProtocolError(
                f"/logits: expected {vocab_size} entries, got {len(raw)}"
            )
        values = np.zeros(vocab_size, dtype=np.float64)
        masked = np.zeros(vocab_size, dtype=bool)
        for i, entry in enumerate(raw):
            if entry == "-inf":
                masked[i] = True
            elif isinstance(entry, (int, float)) and not isinstance(entry, bool):
                value = float(entry)
                if not np.isfinite(value):
                    raise ProtocolError(
                        f"/logits: non-finite value {value!r} at index {i}"
                    )
                values[i] = value
            else:
                raise ProtocolError(
                    f"/logits: entry {i} must be a number or \"-inf\", got {entry!r}"
                )
        try:
            return LogitVector(values, masked)
        except DegenerateDistributionError as exc:
            raise ProtocolError(f"/logits: {exc}") from exc

    def distort(self, image_ref: str, noise_steps: int) -> str:
        return self._transform(image_ref, "distort", int(noise_steps))

    def transform(self, image_ref: str, param: int) -> str:
        return self._transform(image_ref, "augment", int(param))

    def _transform(self, image_ref: str, kind: str, param: int) -> str:
        if not image_ref:
            raise ValidationError("image_ref must be nonempty")
        payload = {"image_ref": image_ref, "kind": kind, "param": param}
        doc = self._request(
            "POST", "/transform", payload, self.endpoint.logits_timeout_s,
            BackendUnavailableError,
        )
        ref = doc.get("image_ref")
        if not isinstance(ref, str) or not ref:
            raise ProtocolError("/transform: payload missing 'image_ref'")
        return ref

    # -- visual generator --------------------------------------------

    def generate(self, caption: str, seed: int, steps: int) -> str:
        if not caption:
            raise ValidationError("caption must be nonempty")
        # Seeds travel as JSON numbers; stay below 2**53 so every consumer
        # (including JavaScript servers) reads the integer exactly.
        seed = int(seed) & ((1 << 53) - 1)
        payload = {"caption": caption, "seed": seed, "steps": int(steps)}
        payload = {"request_id": request_id_for("/txt2img", payload), **payload}
        doc = self._request(
            "POST", "/txt2img", payload, self.endpoint.generate_timeout_s,
            GeneratorUnavailableError,
        )
        ref = doc.get("image_ref")
        if not isinstance(ref, str) or not ref:
            raise ProtocolError("/txt2img: payload missing 'image_ref'")
        return ref
