"""Wire client behavior against a local mock adapter: parsing, retries,
backoff, concurrency limits, caching, and failure taxonomy."""

from __future__ import annotations

import threading

import numpy as np
import pytest

from degf import (
    BackendUnavailableError,
    GeneratorUnavailableError,
    ProtocolError,
    ValidationError,
)
from degf.echoref import echo_logits, echo_txt2img_ref
from degf.httpadapter import (
    BACKOFF_BASE_S,
    META_STALENESS_S,
    AdapterClient,
    AdapterEndpoint,
    request_id_for,
)

from mock_adapter import MockAdapter


@pytest.fixture()
def server():
    with MockAdapter() as mock:
        yield mock


def client_for(mock, *, sleep=None, clock=None, **endpoint_kwargs):
    endpoint = AdapterEndpoint(base_url=mock.base_url, **endpoint_kwargs)
    kwargs = {}
    if sleep is not None:
        kwargs["sleep"] = sleep
    if clock is not None:
        kwargs["clock"] = clock
    return AdapterClient(endpoint, **kwargs)


class TestEndpointValidation:
    def test_scheme_required(self):
        with pytest.raises(ValidationError):
            AdapterEndpoint(base_url="ftp://host")

    def test_positive_timeouts(self):
        with pytest.raises(ValidationError):
            AdapterEndpoint(base_url="http://h", logits_timeout_s=0)

    def test_defaults(self):
        ep = AdapterEndpoint(base_url="http://h")
        assert ep.logits_timeout_s == 30.0
        assert ep.generate_timeout_s == 120.0
        assert ep.max_retries == 2
        assert ep.max_in_flight == 4


class TestRequestId:
    def test_content_derived_and_stable(self):
        p = {"image_ref": None, "prompt": "q", "prefix_ids": [1, 2]}
        a = request_id_for("/logits", p)
        b = request_id_for("/logits", dict(reversed(list(p.items()))))
        assert a == b  # key order must not matter
        assert len(a) == 32 and int(a, 16) >= 0

    def test_distinct_payloads_distinct_ids(self):
        a = request_id_for("/logits", {"prompt": "q", "prefix_ids": [1]})
        b = request_id_for("/logits", {"prompt": "q", "prefix_ids": [2]})
        assert a != b

    def test_route_is_part_of_identity(self):
        p = {"x": 1}
        assert request_id_for("/logits", p) != request_id_for("/txt2img", p)


class TestLogitsParsing:
    def test_values_and_mask_match_reference(self, server):
        with client_for(server) as client:
            lv = client.logits("img-1", "what?", [1, 2, 3])
        want_vals, want_mask = echo_logits("img-1", "what?", (1, 2, 3))
        np.testing.assert_array_equal(lv.values, want_vals)
        np.testing.assert_array_equal(lv.masked, want_mask)

    def test_wrong_length_is_protocol_error(self, server):
        server.faults.bad_length = 1
        with client_for(server) as client:
            with pytest.raises(ProtocolError):
                client.logits(None, "q", [])

    def test_nan_entry_is_protocol_error(self, server):
        server.faults.nan_payload = 1
        with client_for(server) as client:
            with pytest.raises(ProtocolError):
                client.logits(None, "q", [])


class TestRetries:
    def test_retry_then_succeed_reuses_request_id(self, server):
        server.faults.fail_logits = 1
        sleeps = []
        with client_for(server, sleep=sleeps.append) as client:
            lv = client.logits("img-1", "q", [])
        assert lv.dim == 32
        logits_posts = [b for m, p, b in server.request_log() if p == "/logits"]
        assert len(logits_posts) == 2
        assert logits_posts[0]["request_id"] == logits_posts[1]["request_id"]
        assert len(sleeps) == 1

    def test_backoff_schedule_with_jitter(self, server):
        server.faults.fail_logits = 3  # exhaust max_retries=2
        sleeps = []
        with client_for(server, sleep=sleeps.append) as client:
            with pytest.raises(BackendUnavailableError):
                client.logits("img-1", "q", [])
        assert len(sleeps) == 2
        assert BACKOFF_BASE_S <= sleeps[0] <= BACKOFF_BASE_S * 1.5
        assert BACKOFF_BASE_S * 2 <= sleeps[1] <= BACKOFF_BASE_S * 3

    def test_retry_exhaustion_maps_to_backend_unavailable(self, server):
        server.faults.fail_logits = 99
        with client_for(server, sleep=lambda s: None) as client:
            with pytest.raises(BackendUnavailableError) as exc:
                client.logits("img-1", "q", [])
        assert "3 attempts" in str(exc.value)

    def test_non_retryable_5xx_fails_fast(self, server):
        server.faults.fail_logits = 99
        server.faults.fail_retryable = False
        with client_for(server, sleep=lambda s: None) as client:
            with pytest.raises(BackendUnavailableError):
                client.logits("img-1", "q", [])
        # one request, no retries
        assert len([1 for m, p, b in server.request_log() if p == "/logits"]) == 1

    def test_4xx_is_protocol_error_without_retry(self, server):
        server.faults.fail_logits = 99
        server.faults.fail_status = 400
        server.faults.fail_retryable = False
        with client_for(server, sleep=lambda s: None) as client:
            with pytest.raises(ProtocolError):
                client.logits("img-1", "q", [])
        assert len([1 for m, p, b in server.request_log() if p == "/logits"]) == 1

    def test_timeout_retries_then_backend_unavailable(self, server):
        server.faults.stall_logits = 99
        server.faults.stall_s = 0.3
        with client_for(server, sleep=lambda s: None, logits_timeout_s=0.05, max_retries=1) as client:
            with pytest.raises(BackendUnavailableError):
                client.logits("img-1", "q", [])

    def test_txt2img_failure_maps_to_generator_unavailable(self, server):
        server.faults.fail_txt2img = 99
        with client_for(server, sleep=lambda s: None) as client:
            with pytest.raises(GeneratorUnavailableError):
                client.generate("a cat", 1, 50)


class TestMetaCache:
    def test_meta_cached_until_stale(self, server):
        now = [0.0]
        with client_for(server, clock=lambda: now[0]) as client:
            client.meta()
            client.meta()
            assert len([1 for m, p, b in server.request_log() if p == "/meta"]) == 1
            now[0] = META_STALENESS_S + 1.0
            client.meta()
            assert len([1 for m, p, b in server.request_log() if p == "/meta"]) == 2

    def test_vocab_size_change_is_fatal(self, server):
        now = [0.0]
        with client_for(server, clock=lambda: now[0]) as client:
            client.meta()
            server.meta_override = {"vocab_size": 64}
            now[0] = META_STALENESS_S + 1.0
            with pytest.raises(ProtocolError):
                client.meta()

    def test_extra_meta_fields_tolerated(self, server):
        with client_for(server) as client:
            meta = client.meta()
        assert "extra_field_for_forward_compat" in meta


class TestConcurrencyLimit:
    def test_in_flight_never_exceeds_limit(self, server):
        server.faults.handler_delay_s = 0.05
        with client_for(server, max_in_flight=4) as client:
            threads = [
                threading.Thread(target=client.logits, args=(f"img-{i}", "q", []))
                for i in range(8)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        assert server.peak_in_flight <= 4
        assert len([1 for m, p, b in server.request_log() if p == "/logits"]) == 8


class TestGenerator:
    def test_reference_ref_and_dedup_cache(self, server):
        with client_for(server) as client:
            ref1 = client.generate("a cat", 7, 50)
            ref2 = client.generate("a cat", 7, 50)
        assert ref1 == ref2 == echo_txt2img_ref("a cat", 7, 50)
        assert server.txt2img_executions == 1  # replay served from cache

    def test_empty_caption_rejected_client_side(self, server):
        with client_for(server) as client:
            with pytest.raises(ValidationError):
                client.generate("", 1, 50)
        assert server.request_log() == [("GET", "/meta", None)] or all(
            p != "/txt2img" for m, p, b in server.request_log()
        )

    def test_seed_masked_below_2_53(self, server):
        with client_for(server) as client:
            client.generate("a cat", 2**60 + 5, 50)
        posts = [b for m, p, b in server.request_log() if p == "/txt2img"]
        assert posts[0]["seed"] < 2**53

    def test_transform_routes(self, server):
        with client_for(server) as client:
            noisy = client.distort("img-1", 500)
            aug = client.transform("img-1", 2)
        assert noisy != aug
        posts = [b for m, p, b in server.request_log() if p == "/transform"]
        assert posts[0]["kind"] == "distort" and posts[0]["param"] == 500
        assert posts[1]["kind"] == "augment" and posts[1]["param"] == 2

    def test_empty_image_ref_rejected(self, server):
        with client_for(server) as client:
            with pytest.raises(ValidationError):
                client.distort("", 500)
