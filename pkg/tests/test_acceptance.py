"""Acceptance gate: every release-blocking behavior, one criterion per
test class, at the stated tolerances and runtime budgets.

Run `pytest tests/test_acceptance.py -v` for the per-criterion verdict
table (printed by the conftest summary hook).
"""

from __future__ import annotations

import json
import math
import threading
import time

import numpy as np
import pytest

from degf import (
    Branch,
    DecodeConfig,
    LogitVector,
    ProbVector,
    apply_mask,
    degf_step,
    js_divergence,
    m3id_step,
    plausibility_mask,
    regular_step,
    ritual_step,
    run_degf,
    sample,
    seed_state,
    softmax,
    synthetic_backend,
    vcd_step,
)
from degf.cli import main
from degf.metrics import (
    BenchmarkRecord,
    chair_scores,
    mme_score,
    pope_scores,
    read_records,
    trace_divergence_stats,
)
from degf.synthetic import Scenario, ScriptedStep, SyntheticBackend, SyntheticGenerator
from degf.traceio import read_traces

from oracles import (
    enumerate_degf_sequences,
    make_lean_degf_runner,
    oracle_js,
    oracle_softmax,
)


# ------------------------------------------------------------------
# 1. Divergence kernel vs independent oracle
# ------------------------------------------------------------------

def _oracle_js_terms(p: np.ndarray, q: np.ndarray) -> float:
    """Vectorized direct-summation oracle: per-term log2 ratios summed
    with math.fsum (exact rounding). Cross-checked against the scalar
    oracle below before use."""
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0) / m), 0.0)
        tq = np.where(q > 0, q * np.log2(np.where(q > 0, q, 1.0) / m), 0.0)
    return 0.5 * math.fsum(tp.tolist()) + 0.5 * math.fsum(tq.tolist())


@pytest.mark.criterion("divergence-kernel")
class TestDivergenceKernel:
    N_PAIRS = 10_000
    TOL = 1e-10
    BUDGET_S = 5.0

    def test_ten_thousand_pairs_within_tolerance(self):
        rng = np.random.default_rng(8_675_309)
        start = time.perf_counter()
        worst = 0.0
        cross_checked = 0
        for i in range(self.N_PAIRS):
            v = int(rng.integers(2, 513))
            p = rng.dirichlet(np.ones(v))
            q = rng.dirichlet(np.ones(v))
            p /= p.sum()
            q /= q.sum()
            P, Q = ProbVector(p), ProbVector(q)
            d_pq = js_divergence(P, Q)
            d_qp = js_divergence(Q, P)
            assert d_pq == d_qp  # symmetry, exact
            assert 0.0 <= d_pq <= 1.0  # bounds, never violated
            want = _oracle_js_terms(p, q)
            err = abs(d_pq - want)
            worst = max(worst, err)
            assert err <= self.TOL, f"pair {i}: |{d_pq} - {want}| = {err}"
            if i < 200:
                # tie the vectorized oracle to the scalar direct-summation one
                scalar = oracle_js(p.tolist(), q.tolist())
                assert abs(want - scalar) <= 1e-12
                cross_checked += 1
        elapsed = time.perf_counter() - start
        assert cross_checked == 200
        assert elapsed < self.BUDGET_S, f"took {elapsed:.2f}s (budget {self.BUDGET_S}s)"


# ------------------------------------------------------------------
# 2. Branch gate agrees with the oracle decision on scripted triples
# ------------------------------------------------------------------

@pytest.mark.criterion("branch-gate")
class TestBranchGate:
    def test_thousand_scripted_triples(self):
        rng = np.random.default_rng(271_828)
        agree = 0
        for _ in range(1000):
            v = int(rng.integers(2, 48))
            a = rng.normal(scale=3.0, size=v)
            b = rng.normal(scale=3.0, size=v)
            gamma = float(rng.uniform(0.0, 1.0))
            cfg = DecodeConfig(gamma=gamma)
            decision = degf_step(LogitVector(a), LogitVector(b), cfg)
            d_oracle = oracle_js(oracle_softmax(a.tolist()), oracle_softmax(b.tolist()))
            expected = (
                Branch.COMPLEMENTARY if d_oracle < gamma else Branch.CONTRASTIVE
            )
            assert decision.branch is expected
            agree += 1
        assert agree == 1000  # 100% agreement


# ------------------------------------------------------------------
# 3. Zero-weight variants reduce to plausibility-masked regular decoding
# ------------------------------------------------------------------

@pytest.mark.criterion("reduction-to-regular")
class TestReductionToRegular:
    N_CONTEXTS = 500
    TOL = 1e-12

    def _variants(self, f_v, f_second):
        yield degf_step(f_v, f_second, DecodeConfig(alpha1=0.0, alpha2=0.0))
        yield vcd_step(f_v, f_second, DecodeConfig(decoder="vcd", vcd_alpha=0.0))
        yield m3id_step(f_v, f_second, 0, DecodeConfig(decoder="m3id"))
        yield ritual_step(f_v, f_second, DecodeConfig(decoder="ritual", ritual_kappa=0.0))

    def test_distribution_and_token_match(self):
        rng = np.random.default_rng(1_618_033)
        cfg = DecodeConfig()
        for i in range(self.N_CONTEXTS):
            v = int(rng.integers(2, 64))
            f_v = LogitVector(rng.normal(scale=4.0, size=v))
            f_second = LogitVector(rng.normal(scale=4.0, size=v))
            want = softmax(regular_step(f_v, cfg).fused, cfg.temperature)
            state = seed_state(i)
            want_token, _ = sample(want, "multinomial", state)
            for decision in self._variants(f_v, f_second):
                got = softmax(decision.fused, cfg.temperature)
                np.testing.assert_allclose(
                    got.values, want.values, atol=self.TOL, rtol=0.0
                )
                got_token, _ = sample(got, "multinomial", state)
                assert got_token == want_token  # same seed, same token


# ------------------------------------------------------------------
# 4. Plausibility constraint: exact zeros and nested keep-sets
# ------------------------------------------------------------------

@pytest.mark.criterion("plausibility-constraint")
class TestPlausibilityConstraint:
    BETAS = (0.0, 0.05, 0.1, 0.25, 0.5, 1.0)

    def test_masked_probability_exactly_zero_and_keep_sets_nested(self):
        rng = np.random.default_rng(314_159)
        for _ in range(250):
            v = int(rng.integers(2, 64))
            logits = LogitVector(rng.normal(scale=4.0, size=v))
            p = softmax(logits, 1.0)
            previous = None
            for beta in self.BETAS:
                keep = plausibility_mask(p, beta=beta)
                assert keep.any()
                restricted = apply_mask(logits, keep)
                probs = softmax(restricted, 1.0)
                masked_entries = probs.values[restricted.masked]
                assert (masked_entries == 0.0).all()  # exactly zero
                if previous is not None:
                    assert not (keep & ~previous).any()  # keep ⊆ previous
                previous = keep

    def test_worked_example_boundaries(self):
        p = ProbVector([0.7, 0.2, 0.1])
        assert plausibility_mask(p, beta=0.0).tolist() == [True, True, True]
        assert plausibility_mask(p, beta=0.25).tolist() == [True, True, False]
        assert plausibility_mask(p, beta=1.0).tolist() == [True, False, False]


# ------------------------------------------------------------------
# 5. Exhaustively enumerated sequence distribution vs 200k seeded runs
# ------------------------------------------------------------------

@pytest.mark.criterion("sequence-distribution")
class TestSequenceDistribution:
    PROMPT = "what do you see?"
    IMAGE = "img-1"
    N_RUNS = 200_000
    BUDGET_S = 60.0

    def _cfg(self, seed=0):
        return DecodeConfig(seed=seed, max_new_tokens=3, initial_max_tokens=2)

    def test_lean_runner_is_mechanically_equivalent(self):
        # The statistical comparison below samples with a lean replayer;
        # prove it reproduces the full pipeline exactly first.
        for seed in range(5):
            cfg = self._cfg(seed)
            backend, generator = synthetic_backend("tiny4")
            lean = make_lean_degf_runner(backend, generator, self.IMAGE, self.PROMPT, cfg)
            backend2, generator2 = synthetic_backend("tiny4")
            real = run_degf(backend2, generator2, self.IMAGE, self.PROMPT, cfg)
            assert lean(seed_state(seed)) == tuple(real.trace.final_response)

    def test_every_sequence_frequency_within_three_sigma(self):
        start = time.perf_counter()
        cfg = self._cfg()
        backend, generator = synthetic_backend("tiny4")
        exact = enumerate_degf_sequences(backend, generator, self.IMAGE, self.PROMPT, cfg)
        assert len(exact) >= 10  # a genuinely branching tree
        assert math.fsum(exact.values()) == pytest.approx(1.0, abs=1e-9)

        lean = make_lean_degf_runner(backend, generator, self.IMAGE, self.PROMPT, cfg)
        counts: dict = {}
        for r in range(self.N_RUNS):
            seq = lean(seed_state(r))
            counts[seq] = counts.get(seq, 0) + 1

        assert set(counts) <= set(exact), "observed a sequence with zero probability"
        for seq, p in sorted(exact.items()):
            sigma = math.sqrt(p * (1.0 - p) / self.N_RUNS)
            freq = counts.get(seq, 0) / self.N_RUNS
            assert abs(freq - p) <= 3.0 * sigma, (
                f"sequence {seq}: freq {freq}, exact {p}, 3 sigma {3 * sigma}"
            )
        elapsed = time.perf_counter() - start
        assert elapsed < self.BUDGET_S, f"took {elapsed:.1f}s (budget {self.BUDGET_S}s)"


# ------------------------------------------------------------------
# 6. Metric oracles: hand-tallied fixtures reproduce exact counts
# ------------------------------------------------------------------

@pytest.mark.criterion("metric-oracles")
class TestMetricOracles:
    def test_pope_confusion_fixture(self, capsys, tmp_path, fixtures_dir):
        # End to end: the scripted six-image scenario answers the committed
        # dataset; the confusion matrix is TP=2 FP=1 FN=1 TN=2 by design.
        out = tmp_path / "pope"
        code = main([
            "bench", "--backend", "synthetic:pope6", "--decoder", "regular",
            "--kind", "yes_no", "--dataset", str(fixtures_dir / "pope6.jsonl"),
            "--out", str(out),
        ])
        capsys.readouterr()
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        metrics = report["rows"][0]["per_seed"][0]["metrics"]
        assert metrics["counts"] == {"tp": 2, "fp": 1, "fn": 1, "tn": 2, "unparsed": 0}
        for name in ("accuracy", "precision", "recall", "f1"):
            assert metrics[name] == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_chair_hand_tallied_corpus(self, fixtures_dir):
        records = read_records(fixtures_dir / "chair10.jsonl")
        truth = json.loads((fixtures_dir / "chair10_truth.json").read_text())
        s = chair_scores(records, truth)
        assert s["counts"] == {
            "mentions": 21,
            "hallucinated_mentions": 5,
            "sentences": 12,
            "hallucinated_sentences": 5,
            "truth_objects": 23,
            "truth_mentioned": 16,
        }
        assert s["chair_i"] == pytest.approx(5.0 / 21.0, abs=1e-12)
        assert s["chair_s"] == pytest.approx(5.0 / 12.0, abs=1e-12)
        assert s["recall"] == pytest.approx(16.0 / 23.0, abs=1e-12)
        assert s["avg_length"] == pytest.approx(7.2, abs=1e-12)

    def test_mme_two_image_fixture_scores_125(self):
        def rec(instance, image, label, response):
            return BenchmarkRecord(
                instance_id=instance, benchmark_kind="yes_no", image_id=image,
                question="Is it day?", label=label, response=response,
            )

        records = [
            rec("A1", "img-A", "yes", "Yes"),
            rec("A2", "img-A", "no", "No"),
            rec("B1", "img-B", "yes", "Yes"),
            rec("B2", "img-B", "no", "Yes"),
        ]
        s = mme_score(records)
        assert s["score"] == pytest.approx(125.0, abs=1e-12)
        assert s["accuracy"] == pytest.approx(0.75, abs=1e-12)
        assert s["accuracy_plus"] == pytest.approx(0.5, abs=1e-12)

    def test_zero_over_zero_returns_zero_and_flags(self):
        records = [
            BenchmarkRecord(
                instance_id="a", benchmark_kind="yes_no", image_id="i1",
                question="q", label="no", response="No",
            )
        ]
        s = pope_scores(records)
        assert s["precision"] == 0.0 and s["recall"] == 0.0 and s["f1"] == 0.0
        assert {"precision", "recall", "f1"} <= set(s["flags"])
        c = chair_scores(
            [BenchmarkRecord(
                instance_id="r", benchmark_kind="open_caption", image_id="i1",
                question="q", label="", response="Nothing notable.",
            )],
            {"i1": ["dog"]},
        )
        assert c["chair_i"] == 0.0 and "chair_i" in c["flags"]


# ------------------------------------------------------------------
# 7. Golden end-to-end decode, byte-identical trace
# ------------------------------------------------------------------

@pytest.mark.criterion("golden-trace")
class TestGoldenTrace:
    def test_byte_identical_and_all_complementary(self, capsys, tmp_path, fixtures_dir):
        out = tmp_path / "golden"
        code = main([
            "decode", "--backend", "synthetic:identical", "--decoder", "degf",
            "--image", "img-1", "--seed", "42", "--out", str(out),
        ])
        capsys.readouterr()
        assert code == 0
        got = (out / "trace.jsonl").read_bytes()
        want = (fixtures_dir / "golden_trace_identical_seed42.jsonl").read_bytes()
        assert got == want, "trace bytes drifted from the committed fixture"

        trace = read_traces(out / "trace.jsonl")[0]
        cfg = trace.config
        assert (cfg["alpha1"], cfg["alpha2"]) == (3.0, 1.0)
        assert (cfg["gamma"], cfg["beta"]) == (0.1, 0.25)
        assert trace.steps, "expected fusion steps"
        for step in trace.steps:
            assert step.branch == "complementary"
            assert step.d_t == 0.0


# ------------------------------------------------------------------
# 8. Divergence separates scripted clean vs hallucinatory traces
# ------------------------------------------------------------------

def _point(vocab_size, peak, height=200.0):
    vals = [0.0] * vocab_size
    vals[peak] = height
    return tuple(vals)


def _two_class_scenarios():
    shared = dict(vocab_size=4, eos_id=3, hash_seed=77)
    clean = Scenario(
        name="clean",
        scripted=(
            ScriptedStep(step=0, conditioning="any", values=(1.2, 0.4, -0.3, -5.0)),
            ScriptedStep(step=1, conditioning="any", values=(-0.2, 0.9, 0.1, -5.0)),
            ScriptedStep(step=2, conditioning="any", values=_point(4, 3)),
        ),
        **shared,
    )
    hallucinatory = Scenario(
        name="hallucinatory",
        scripted=(
            ScriptedStep(step=0, conditioning="original", values=_point(4, 1)),
            ScriptedStep(step=0, conditioning="generated", values=_point(4, 2)),
            ScriptedStep(step=1, conditioning="original", values=_point(4, 1)),
            ScriptedStep(step=1, conditioning="generated", values=_point(4, 0)),
            ScriptedStep(step=2, conditioning="any", values=_point(4, 3)),
        ),
        **shared,
    )
    return clean, hallucinatory


@pytest.mark.criterion("divergence-separates-classes")
class TestDivergenceSeparatesClasses:
    def _decode_class(self, scenario, tag, n=12):
        traces = []
        for k in range(n):
            backend = SyntheticBackend(scenario)
            cfg = DecodeConfig(seed=k)
            result = run_degf(
                backend, SyntheticGenerator(), f"{tag}-{k}", "what is shown?", cfg
            )
            traces.append(result.trace)
        return traces

    def test_mean_ordering_and_negative_correlation(self):
        clean_sc, bad_sc = _two_class_scenarios()
        clean = self._decode_class(clean_sc, "img-clean")
        bad = self._decode_class(bad_sc, "img-bad")

        def label(trace, step):
            return "clean" if trace.image_ref.startswith("img-clean") else "hallucinatory"

        def mean_d(trace):
            return math.fsum(s.d_t for s in trace.steps) / len(trace.steps)

        def flagged_share(trace):
            return sum(1 for s in trace.steps if s.branch == "contrastive") / len(trace.steps)

        pairs = [
            (1.0 - mean_d(t), flagged_share(t)) for t in clean + bad
        ]  # (similarity proxy, response-level hallucination score)
        stats = trace_divergence_stats(clean + bad, label, pairs=pairs, bins=5)
        assert stats["classes"]["hallucinatory"]["mean"] > stats["classes"]["clean"]["mean"]
        assert stats["pearson_rho"] < 0.0
        assert len(stats["binned"]) == 5


# ------------------------------------------------------------------
# 9. Wire protocol conformance against the mock adapter
# ------------------------------------------------------------------

@pytest.mark.criterion("protocol-conformance")
class TestProtocolConformance:
    def test_full_contract_suite(self):
        from contract_suite import run_full_suite
        from mock_adapter import MockAdapter

        with MockAdapter() as mock:
            run_full_suite(mock.base_url)

    def test_fault_behaviors(self):
        from degf import BackendUnavailableError
        from degf.httpadapter import AdapterClient, AdapterEndpoint
        from mock_adapter import MockAdapter

        # retry then succeed, same request id
        with MockAdapter() as mock:
            mock.faults.fail_logits = 1
            sleeps = []
            with AdapterClient(
                AdapterEndpoint(base_url=mock.base_url), sleep=sleeps.append
            ) as client:
                client.logits("img-1", "q", [])
            posts = [b for m, p, b in mock.request_log() if p == "/logits"]
            assert len(posts) == 2
            assert posts[0]["request_id"] == posts[1]["request_id"]
            assert len(sleeps) == 1 and 0.5 <= sleeps[0] <= 0.75

        # timeout -> unavailable after retries
        with MockAdapter() as mock:
            mock.faults.stall_logits = 99
            mock.faults.stall_s = 0.3
            endpoint = AdapterEndpoint(
                base_url=mock.base_url, logits_timeout_s=0.05, max_retries=1
            )
            with AdapterClient(endpoint, sleep=lambda s: None) as client:
                with pytest.raises(BackendUnavailableError):
                    client.logits("img-1", "q", [])

        # bounded in-flight under concurrent load
        with MockAdapter() as mock:
            mock.faults.handler_delay_s = 0.05
            with AdapterClient(
                AdapterEndpoint(base_url=mock.base_url, max_in_flight=4)
            ) as client:
                threads = [
                    threading.Thread(target=client.logits, args=(f"img-{i}", "q", []))
                    for i in range(8)
                ]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
            assert mock.peak_in_flight <= 4

    def test_golden_transcript(self, fixtures_dir):
        import hashlib

        from degf.httpadapter import AdapterClient, AdapterEndpoint
        from mock_adapter import MockAdapter

        want = json.loads((fixtures_dir / "golden_transcript.json").read_text())
        with MockAdapter() as mock:
            with AdapterClient(AdapterEndpoint(base_url=mock.base_url)) as client:
                client.meta()
                lv1 = client.logits("img-1", "what?", [1, 2, 3])
                lv2 = client.logits(None, "describe", [])
                ref_gen = client.generate("a cat", 7, 50)
                ref_noise = client.distort("img-1", 500)
                ref_aug = client.transform("img-1", 2)
            log = mock.request_log()

        def digest(lv):
            return hashlib.sha256(lv.values.tobytes() + lv.masked.tobytes()).hexdigest()

        got_requests = [{"method": m, "path": p, "body": b} for m, p, b in log]
        assert got_requests == want["requests"]
        assert digest(lv1) == want["derived"]["logits_img1_digest"]
        assert digest(lv2) == want["derived"]["logits_noimg_digest"]
        assert ref_gen == want["derived"]["txt2img_ref"]
        assert ref_noise == want["derived"]["distort_ref"]
        assert ref_aug == want["derived"]["augment_ref"]
