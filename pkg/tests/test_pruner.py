import numpy as np
import pytest

from src.analysis.pruner import (
    ELISION,
    HeuristicEstimator,
    ablate_bottom,
    estimate_tokens,
    prune,
    prune_scores,
    render_context,
    select,
    select_baseline,
    select_scores,
)
from src.collectors.embedders import TestEmbedder
from src.config import PruneConfig
from src.models.data_models import MethodSpec, TurnRecord
from src.store.history import DialogueHistory


class FixedQueryEmbedder:
    """Returns the first basis vector for every text, so scores equal column 0."""

    name = "fixed"

    def __init__(self, dim: int):
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, texts):
        out = np.zeros((len(texts), self._dim))
        out[:, 0] = 1.0
        return out


def _scored_history(scores, dim=4) -> DialogueHistory:
    history = DialogueHistory("p1")
    for i, s in enumerate(scores, start=1):
        row = np.zeros(dim, dtype=np.float32)
        row[0] = s
        row[1] = 1.0
        history.append(f"question {i}", f"answer {i}", row)
    return history


def _turns(n):
    return tuple(TurnRecord.create(i, f"q{i}", f"a{i}") for i in range(1, n + 1))


EXAMPLE = [1, 1, 5, 5, 1, 1, 5, 1]


def test_prune_worked_example():
    selection = prune(_scored_history(EXAMPLE), "any", FixedQueryEmbedder(4), PruneConfig())

    assert selection.turn_indices == (3, 4, 7)
    assert selection.stats.retrieved_segments == 2
    assert selection.stats.turns_per_segment == pytest.approx(1.5)
    assert selection.stats.turns_total == 3
    assert selection.ranking == (3, 4, 7)
    assert selection.token_pruned <= selection.token_full


def test_prune_renders_chronologically_with_elision():
    selection = prune(_scored_history(EXAMPLE), "any", FixedQueryEmbedder(4))
    expected = (
        "User: question 3\nAgent: answer 3\n\n"
        "User: question 4\nAgent: answer 4\n\n"
        f"{ELISION}\n\n"
        "User: question 7\nAgent: answer 7"
    )
    assert selection.rendered_context == expected


def test_prune_empty_history_does_not_embed():
    class Exploding(FixedQueryEmbedder):
        def embed(self, texts):
            raise AssertionError("should not embed")

    selection = prune(DialogueHistory("e"), "q", Exploding(4))
    assert selection.turn_indices == ()
    assert selection.rendered_context == ""
    assert selection.stats.retrieved_segments == 0


def test_prune_single_turn():
    selection = prune(_scored_history([0.3]), "q", FixedQueryEmbedder(4))
    assert selection.turn_indices == (1,)


def test_estimate_tokens_heuristic():
    assert estimate_tokens("hello world") == 3
    assert estimate_tokens("") == 0
    assert HeuristicEstimator().count("abcd") == 1


def test_render_context_adjacent_turns_have_no_marker():
    text = render_context(_turns(2))
    assert ELISION not in text
    assert text == "User: q1\nAgent: a1\n\nUser: q2\nAgent: a2"


def test_topk_ties_prefer_earlier_turn():
    selection = select_scores(_turns(4), [0.9, 0.1, 0.9, 0.9], MethodSpec("topk", 2))
    assert selection.turn_indices == (1, 3)
    assert selection.stats.retrieved_segments == 2


def test_topk_budget_is_min_of_k_and_length():
    selection = select_scores(_turns(3), [0.2, 0.5, 0.1], MethodSpec("topk", 10))
    assert selection.turn_indices == (1, 2, 3)
    assert selection.stats.retrieved_segments == 1
    assert selection.stats.turns_per_segment == 3


def test_full_and_none_baselines():
    history = _scored_history([0.1, 0.5, 0.2, 0.9, 0.3])
    full = select_baseline(history, "q", FixedQueryEmbedder(4), MethodSpec("full"))
    none = select_baseline(history, "q", FixedQueryEmbedder(4), MethodSpec("none"))

    assert full.turn_indices == (1, 2, 3, 4, 5)
    assert full.token_pruned == full.token_full
    assert none.turn_indices == ()
    assert none.token_pruned == 0
    assert none.token_full == full.token_full


def test_select_baseline_rejects_dycp_and_unresolved_auto():
    history = _scored_history([0.1, 0.5])
    with pytest.raises(ValueError):
        select_baseline(history, "q", FixedQueryEmbedder(4), MethodSpec("dycp"))
    with pytest.raises(ValueError):
        select(history, "q", FixedQueryEmbedder(4), MethodSpec("topk"))


def test_ablate_bottom_removes_lowest_in_span():
    base = prune_scores(_turns(8), [-3, -3, 0.2, 1.5, -0.1, 0.4, -3, -3], PruneConfig(tau=0.0, theta=100.0))
    assert base.turn_indices == (3, 4, 5, 6)

    ablated = ablate_bottom(base, [-3, -3, 0.2, 1.5, -0.1, 0.4, -3, -3], 2)
    assert ablated.turn_indices == (4, 6)
    assert ablated.stats.retrieved_segments == 2
    assert ablated.method == "bottom:2"


def test_ablate_bottom_anchor_keeps_argmax():
    scores = [-3, 0.5, 0.9, 0.7, -3]
    base = prune_scores(_turns(5), scores, PruneConfig(tau=-0.5, theta=100.0))
    assert base.turn_indices == (2, 3, 4)

    ablated = ablate_bottom(base, scores, 3)
    assert ablated.turn_indices == (3,)


def test_ablate_bottom_single_turn_span_unchanged():
    scores = [0.0, 9.0, 0.0, 0.0]
    base = prune_scores(_turns(4), scores, PruneConfig(theta=100.0))
    assert base.turn_indices == (2,)
    assert ablate_bottom(base, scores, 1).turn_indices == (2,)


def test_ablate_bottom_ties_remove_later_turn():
    scores = [-3, 1.0, 1.0, 1.0, -3]
    base = prune_scores(_turns(5), scores, PruneConfig(tau=-1.0, theta=100.0))
    assert base.turn_indices == (2, 3, 4)
    assert ablate_bottom(base, scores, 1).turn_indices == (2, 3)
    assert ablate_bottom(base, scores, 5).turn_indices == (2,)


def test_ablate_bottom_rejects_zero():
    base = prune_scores(_turns(2), [1.0, 0.0])
    with pytest.raises(ValueError):
        ablate_bottom(base, [1.0, 0.0], 0)


def test_bottom_sweep_is_monotone_and_anchored():
    rng = np.random.default_rng(17)
    for _ in range(100):
        scores = rng.normal(size=int(rng.integers(5, 80))).tolist()
        turns = _turns(len(scores))
        base = prune_scores(turns, scores, PruneConfig())
        previous = base
        for m in (1, 2, 3):
            ablated = select_scores(turns, scores, MethodSpec("bottom", bottom=m))
            assert set(ablated.turn_indices) <= set(previous.turn_indices)
            assert ablated.token_pruned <= previous.token_pruned
            for span in base.spans:
                kept = [i for i in span.turns() if i in ablated.turn_indices]
                assert kept
                if len(kept) == 1 and span.length <= m:
                    best = max(span.turns(), key=lambda i: (scores[i - 1], -i))
                    assert kept == [best]
            previous = ablated


def test_methods_are_chronological_subsets():
    rng = np.random.default_rng(23)
    for _ in range(50):
        scores = rng.normal(size=int(rng.integers(1, 50))).tolist()
        turns = _turns(len(scores))
        for label in ("dycp", "full", "none", "topk:3", "bottom:1"):
            selection = select_scores(turns, scores, MethodSpec.parse(label))
            idx = list(selection.turn_indices)
            assert idx == sorted(set(idx))
            assert set(idx) <= set(range(1, len(scores) + 1))
            assert selection.token_pruned <= selection.token_full


def test_dycp_affine_invariance_end_to_end():
    embedder = TestEmbedder(64)
    pairs = [(f"topic {i % 4} word{i}", f"reply {i % 4}") for i in range(40)]
    base = DialogueHistory("a")
    scaled = DialogueHistory("b")
    vectors = embedder.embed([f"User: {u}\nAgent: {a}" for u, a in pairs])
    for (u, a), v in zip(pairs, vectors):
        base.append(u, a, v)
        scaled.append(u, a, v * 4.0)

    first = prune(base, "topic 2 word6", embedder)
    second = prune(scaled, "topic 2 word6", embedder)
    assert first.turn_indices == second.turn_indices
