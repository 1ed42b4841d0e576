import json
from dataclasses import replace

import numpy as np
import pytest

from src.collectors.embedders import TestEmbedder
from src.collectors.planted import generate_planted_benchmark
from src.config import Settings
from src.errors import ProviderTransportError
from src.harness.reports import make_run_id, record_to_json, write_reports
from src.harness.runner import build_histories, resolve_auto_k, run_ablation, run_comparison
from src.models.data_models import MethodSpec
from src.store.cache import cache_path, save_cache


def _settings(**eval_overrides) -> Settings:
    settings = Settings()
    settings.eval.timing = False
    for key, value in eval_overrides.items():
        setattr(settings.eval, key, value)
    return settings


def _methods(*labels):
    return [MethodSpec.parse(label) for label in labels]


@pytest.fixture(scope="module")
def planted():
    return generate_planted_benchmark(seed=1, dialogues=20, turns_per_dialogue=60, topics=6, block_len=10)


@pytest.fixture(scope="module")
def comparison(planted):
    return run_comparison(planted, _methods("dycp", "topk:auto", "full", "none"), TestEmbedder(256), _settings())


def test_one_record_per_method_in_order(comparison):
    assert [r.method for r in comparison] == ["dycp", f"topk:{comparison[1].params['k']}", "full", "none"]
    assert all(len(r.cases) == 120 for r in comparison)
    assert all(r.errors == 0 for r in comparison)


def test_dycp_recall_beats_matched_topk(comparison):
    dycp, topk = comparison[0], comparison[1]
    assert dycp.report.recall >= 0.85
    wins = sum(d.metrics.recall >= t.metrics.recall for d, t in zip(dycp.cases, topk.cases))
    assert wins / len(dycp.cases) >= 0.8


def test_auto_k_matches_dycp_budget(comparison):
    dycp, topk = comparison[0], comparison[1]
    assert topk.params["k"] == max(1, int(np.floor(dycp.turns_mean + 0.5)))
    assert all(c.turns_total == topk.params["k"] for c in topk.cases)


def test_full_and_none_definitions(comparison):
    full, none = comparison[2], comparison[3]
    assert full.report.recall == 1.0
    assert full.report.precision == pytest.approx(10 / 60)
    assert full.tokens_pruned_mean == full.tokens_full_mean
    assert none.report.recall == 0.0
    assert none.report.hit == 0.0
    assert none.tokens_pruned_mean == 0.0


def test_token_compression_on_long_dialogues():
    dataset = generate_planted_benchmark(seed=4, dialogues=5, turns_per_dialogue=300, topics=6, block_len=10)
    record = run_comparison(dataset, _methods("dycp"), TestEmbedder(256), _settings())[0]

    ratios = [c.token_pruned / c.token_full for c in record.cases]
    assert all(c.token_pruned <= c.token_full for c in record.cases)
    assert float(np.mean(ratios)) <= 0.5


def test_reports_are_byte_identical_when_timing_is_off(tmp_path):
    dataset = generate_planted_benchmark(seed=9, dialogues=3, turns_per_dialogue=40, topics=4, block_len=5)
    outputs = []
    for run in ("a", "b"):
        records = run_comparison(dataset, _methods("dycp", "topk:auto", "full", "none"), TestEmbedder(64), _settings())
        run_id = make_run_id([s.dialogue_id for s, _ in dataset], records, timestamped=False)
        paths = write_reports(records, tmp_path / run, run_id)
        outputs.append({p.name: p.read_bytes() for p in paths})
    assert outputs[0] == outputs[1]
    assert len(outputs[0]) == 6


def test_results_json_schema(comparison):
    payload = json.loads(json.dumps(record_to_json(comparison[0], "rid")))
    assert set(payload) == {"run_id", "method", "params", "overall", "cases"}
    overall = payload["overall"]
    for key in ("hit", "recall", "precision", "tokens_full_mean", "tokens_pruned_mean", "tps", "rs", "prune_ms_mean"):
        assert key in overall
    assert set(overall["recall_at"]) == {"1", "3", "5", "10"}
    assert payload["cases"][0]["prune_ms"] == 0.0


def test_provider_failure_is_recorded_per_case():
    class FlakyEmbedder(TestEmbedder):
        def embed(self, texts):
            if any(t == "boom" for t in texts):
                raise ProviderTransportError("provider_unreachable", "down")
            return super().embed(texts)

    dataset = generate_planted_benchmark(seed=5, dialogues=2, turns_per_dialogue=30, topics=3, block_len=10)
    source, cases = dataset[0]
    dataset[0] = (source, [replace(cases[0], query="boom")] + cases[1:])

    records = run_comparison(dataset, _methods("dycp", "full"), FlakyEmbedder(64), _settings())
    for record in records:
        assert record.errors == 1
        assert record.cases[0].error == "provider_unreachable"
        assert record.report.cases == len(record.cases) - 1


def test_asked_after_turn_limits_visible_history():
    dataset = generate_planted_benchmark(seed=6, dialogues=1, turns_per_dialogue=30, topics=3, block_len=10)
    source, cases = dataset[0]
    dataset[0] = (source, [replace(cases[0], asked_after_turn=12)])

    record = run_comparison(dataset, _methods("full"), TestEmbedder(64), _settings())[0]
    assert record.cases[0].turns == tuple(range(1, 13))


def test_parallel_workers_match_serial(planted):
    subset = planted[:4]
    serial = run_comparison(subset, _methods("dycp"), TestEmbedder(128), _settings(workers=1))[0]
    parallel = run_comparison(subset, _methods("dycp"), TestEmbedder(128), _settings(workers=4))[0]
    assert [c.turns for c in serial.cases] == [c.turns for c in parallel.cases]


def test_build_histories_uses_cache(tmp_path, planted):
    subset = planted[:2]
    fresh = build_histories(subset, TestEmbedder(32))
    for prepared in fresh:
        save_cache(prepared.history, cache_path(tmp_path, prepared.source.dialogue_id))

    class NoEmbed(TestEmbedder):
        def embed(self, texts):
            raise AssertionError("turns should come from the cache")

    cached = build_histories(subset, NoEmbed(32), cache_dir=tmp_path)
    for a, b in zip(fresh, cached):
        assert np.array_equal(a.history.snapshot().vectors, b.history.snapshot().vectors)


def test_ablation_is_monotone(planted):
    records = run_ablation(planted[:6], TestEmbedder(256), _settings(), bottoms=[1, 2, 3])
    assert [r.method for r in records] == ["dycp", "bottom:1", "bottom:2", "bottom:3"]
    turns = [r.turns_mean for r in records]
    tokens = [r.tokens_pruned_mean for r in records]
    assert turns == sorted(turns, reverse=True)
    assert tokens == sorted(tokens, reverse=True)
    for base, ablated in zip(records[0].cases, records[3].cases):
        assert set(ablated.turns) <= set(base.turns)
        assert ablated.rs >= 1


def test_resolve_auto_k_rounds_half_up(comparison):
    cases = comparison[0].cases[:2]
    a, b = replace(cases[0], turns_total=10), replace(cases[1], turns_total=11)
    assert resolve_auto_k([a, b]) == 11
    assert resolve_auto_k([]) == 1
