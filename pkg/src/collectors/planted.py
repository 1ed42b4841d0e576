"""Synthetic planted-segment benchmark.

Dialogues are cut into consecutive blocks of ``block_len`` turns. Block ``b``
(0-based) talks about topic ``(b mod topics) + 1`` using words drawn only from
that topic's vocabulary, so the gold turns for a query built from topic ``t``
are exactly the blocks assigned to ``t``. Vocabularies never overlap. The
output depends only on the arguments.
"""

from __future__ import annotations

import numpy as np

from src.collectors.dataset_loader import Dataset
from src.models.data_models import DialogueSource, TestCase, TurnRecord

CONSONANTS = "bcdfghklmnprstvz"
VOWELS = "aeiou"
FILLER = ("so", "well", "okay", "right", "sure", "yeah", "hmm", "then")


def _vocabularies(rng: np.random.Generator, topics: int, size: int) -> list[list[str]]:
    seen: set[str] = set(FILLER)
    vocab: list[list[str]] = []
    for _ in range(topics):
        words: list[str] = []
        while len(words) < size:
            syllables = int(rng.integers(2, 4))
            word = "".join(
                CONSONANTS[int(rng.integers(len(CONSONANTS)))] + VOWELS[int(rng.integers(len(VOWELS)))]
                for _ in range(syllables)
            )
            if word not in seen:
                seen.add(word)
                words.append(word)
        vocab.append(words)
    return vocab


def _utterance(rng: np.random.Generator, words: list[str], count: int) -> str:
    picked = [words[int(i)] for i in rng.choice(len(words), size=min(count, len(words)), replace=False)]
    filler = [FILLER[int(i)] for i in rng.integers(len(FILLER), size=2)]
    return " ".join(filler[:1] + picked + filler[1:])


def block_topic(block: int, topics: int) -> int:
    """1-based topic of a 0-based block."""
    return (block % topics) + 1


def generate_planted_benchmark(
    seed: int,
    dialogues: int,
    turns_per_dialogue: int,
    topics: int,
    block_len: int,
    queries_per_dialogue: int | None = None,
    vocab_size: int = 20,
    words_per_turn: int = 8,
    query_words: int = 5,
) -> Dataset:
    """Build ``dialogues`` dialogues with planted topic blocks and one query per topic.

    ``queries_per_dialogue`` defaults to ``topics``; queries cycle through topics
    that actually appear in the dialogue.
    """
    if min(dialogues, turns_per_dialogue, block_len, vocab_size, words_per_turn, query_words) < 1:
        raise ValueError("planted benchmark parameters must be positive")
    if topics < 2:
        raise ValueError(f"need at least 2 topics, got {topics}")

    rng = np.random.default_rng(seed)
    vocab = _vocabularies(rng, topics, vocab_size)
    n_queries = topics if queries_per_dialogue is None else queries_per_dialogue

    dataset: Dataset = []
    for d in range(dialogues):
        turns: list[TurnRecord] = []
        blocks: dict[int, list[int]] = {}
        for index in range(1, turns_per_dialogue + 1):
            topic = block_topic((index - 1) // block_len, topics)
            blocks.setdefault(topic, []).append(index)
            words = vocab[topic - 1]
            user = _utterance(rng, words, words_per_turn // 2)
            agent = _utterance(rng, words, words_per_turn - words_per_turn // 2)
            turns.append(TurnRecord.create(index, user, agent))

        present = sorted(blocks)
        cases: list[TestCase] = []
        for q in range(n_queries):
            topic = present[q % len(present)]
            words = vocab[topic - 1]
            query = " ".join(words[int(i)] for i in rng.choice(len(words), size=min(query_words, len(words)), replace=False))
            cases.append(
                TestCase(
                    query=query,
                    gold_answer=words[0],
                    gold_turns=frozenset(blocks[topic]),
                    asked_after_turn=turns_per_dialogue,
                )
            )
        dataset.append((DialogueSource(f"planted-{seed}-{d:03d}", tuple(turns)), cases))
    return dataset
