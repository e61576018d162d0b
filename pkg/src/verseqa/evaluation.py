"""Candidate ranking, answer selection, F1/MRR metrics, random baseline.

The F1 here is top-1 selection F1: the single argmax candidate per
question is the predicted positive, so with exactly one gold per question
F1 = precision = recall = top-1 accuracy. A 0.5-threshold binary F1 is
also reported as an auxiliary diagnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embeddings import (EmbeddingMatrix, MAX_ANSWER_TOKENS,
                         MAX_QUESTION_TOKENS, embed_sequence)


@dataclass
class Prediction:
    index: int
    score: float
    label: int


# question id -> ordered candidate predictions (order matches the group)
PredictionSet = dict


@dataclass
class EvalReport:
    n: int
    f1: float
    precision: float
    recall: float
    mrr: float
    ranks: list[int] = field(default_factory=list)
    seed: int | None = None
    model: str = ""
    dataset: str = ""
    translation: str = ""
    threshold_f1: float = 0.0  # auxiliary diagnostic, 0.5-threshold binary F1

    def rank_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for r in self.ranks:
            hist[r] = hist.get(r, 0) + 1
        return hist

    def to_json(self) -> str:
        return json.dumps({
            "model": self.model, "dataset": self.dataset,
            "translation": self.translation, "n": self.n,
            "f1": self.f1, "precision": self.precision, "recall": self.recall,
            "mrr": self.mrr, "threshold_f1": self.threshold_f1,
            "seed": self.seed,
            "ranks_histogram": {str(k): v for k, v in sorted(self.rank_histogram().items())},
        }, sort_keys=True)


def rank_candidates(preds: Sequence[Prediction]) -> int:
    """1-based rank of the gold candidate under stable descending sort."""
    if not preds:
        raise ValueError("no candidates")
    gold = next(i for i, p in enumerate(preds) if p.label == 1)
    score = preds[gold].score
    rank = 1
    for i, p in enumerate(preds):
        if p.score > score or (p.score == score and i < gold):
            rank += 1
    return rank


def select_answer(scores: Sequence[float]) -> int:
    """Lowest index among maximal scores."""
    if not scores:
        raise ValueError("no candidates")
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


def f1_top1(preds: PredictionSet) -> tuple[float, float, float]:
    """Top-1 selection F1: one prediction and one gold per question."""
    if not preds:
        raise ValueError("empty prediction set")
    tp = 0
    for plist in preds.values():
        chosen = select_answer([p.score for p in plist])
        if plist[chosen].label == 1:
            tp += 1
    n = len(preds)
    precision = tp / n
    recall = tp / n
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1, precision, recall


def threshold_f1(preds: PredictionSet, threshold: float = 0.5) -> float:
    """Binary F1 where every candidate scoring above the threshold is a
    predicted positive. Diagnostic only."""
    if not preds:
        raise ValueError("empty prediction set")
    tp = fp = fn = 0
    for plist in preds.values():
        for p in plist:
            positive = p.score > threshold
            if positive and p.label == 1:
                tp += 1
            elif positive:
                fp += 1
            elif p.label == 1:
                fn += 1
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def mrr(preds: PredictionSet) -> float:
    if not preds:
        raise ValueError("empty prediction set")
    return sum(1.0 / rank_candidates(plist) for plist in preds.values()) / len(preds)


def gold_ranks(preds: PredictionSet) -> list[int]:
    return [rank_candidates(preds[qid]) for qid in sorted(preds)]


def random_baseline(groups, seed: int) -> PredictionSet:
    """Independent uniform [0,1) scores per candidate, seeded PCG-64."""
    rng = np.random.default_rng(seed)
    preds: PredictionSet = {}
    for key, g in enumerate(groups):
        preds[key] = [Prediction(index=i, score=float(rng.random()), label=c.label)
                      for i, c in enumerate(g.candidates)]
    return preds


def score_groups(model, groups, embedding: EmbeddingMatrix,
                 max_question_tokens: int = MAX_QUESTION_TOKENS,
                 max_answer_tokens: int = MAX_ANSWER_TOKENS) -> PredictionSet:
    """Score every candidate of every group with a pair model."""
    preds: PredictionSet = {}
    for key, g in enumerate(groups):
        q_emb = embed_sequence(g.question_tokens, embedding, max_question_tokens)
        plist = []
        for i, c in enumerate(g.candidates):
            a_emb = embed_sequence(c.tokens, embedding, max_answer_tokens)
            plist.append(Prediction(index=i, score=model.forward(q_emb, a_emb).item(),
                                    label=c.label))
        preds[key] = plist
    return preds


def evaluate(preds: PredictionSet, model: str = "", dataset: str = "",
             translation: str = "", seed: int | None = None) -> EvalReport:
    f1, precision, recall = f1_top1(preds)
    return EvalReport(n=len(preds), f1=f1, precision=precision, recall=recall,
                      mrr=mrr(preds), ranks=gold_ranks(preds), seed=seed,
                      model=model, dataset=dataset, translation=translation,
                      threshold_f1=threshold_f1(preds))
