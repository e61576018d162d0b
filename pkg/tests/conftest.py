"""Shared fixtures: synthetic separable ranking tasks and tiny embeddings.

The separable task: question tokens mix filler words with one key word;
the positive candidate copies that key word from the question, negatives
are pure filler. Key and filler vocabularies are disjoint, so the task is
learnable by construction.
"""

from __future__ import annotations

import numpy as np
import pytest

from verseqa.data import Candidate, QuestionGroup
from verseqa.embeddings import EmbeddingMatrix, Vocabulary

KEYS = [f"k{i}" for i in range(15)]
FILLERS = [f"f{i}" for i in range(30)]
SHIFTED_KEYS = [f"m{i}" for i in range(15)]


def make_separable_groups(n_groups: int, seed: int, keys=None, fillers=None,
                          n_candidates: int = 3) -> list[QuestionGroup]:
    keys = KEYS if keys is None else keys
    fillers = FILLERS if fillers is None else fillers
    rng = np.random.default_rng(seed)
    groups = []
    for qid in range(n_groups):
        key = keys[rng.integers(len(keys))]

        def filler(k):
            return [fillers[i] for i in rng.integers(len(fillers), size=k)]

        question = " ".join(filler(2) + [key])
        gold = int(rng.integers(n_candidates))
        candidates = []
        for i in range(n_candidates):
            toks = filler(4) if i != gold else filler(1) + [key] + filler(2)
            candidates.append(Candidate(text=" ".join(toks), label=int(i == gold)))
        groups.append(QuestionGroup(qid=qid, translation="syn",
                                    question=question, candidates=candidates))
    return groups


def make_embedding(dim: int = 16, seed: int = 0,
                   extra_tokens=()) -> EmbeddingMatrix:
    """Random embeddings for the synthetic vocabularies.

    All key tokens (base and shifted) share a common direction plus noise,
    so a detector learned on one key vocabulary transfers to the other.
    """
    tokens = KEYS + SHIFTED_KEYS + FILLERS + list(extra_tokens)
    vocab = Vocabulary(tokens)
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(len(vocab), dim)) * 0.5
    table[0] = 0.0
    key_direction = rng.normal(size=dim)
    key_direction /= np.linalg.norm(key_direction)
    for tok in KEYS + SHIFTED_KEYS:
        idx = vocab.index(tok)
        table[idx] = 1.5 * key_direction + 0.3 * rng.normal(size=dim)
    return EmbeddingMatrix(vocab=vocab, dim=dim, table=table)


@pytest.fixture(scope="session")
def tiny_embedding() -> EmbeddingMatrix:
    return make_embedding()
