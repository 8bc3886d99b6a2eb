"""Classification accuracy and top-n annotation F-measure."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from nadetopic.corpus import Document
from nadetopic.errors import ValidationError
from nadetopic.model import ModelParams, predict_annotations, predict_class


def _dedup(items) -> list:
    return list(dict.fromkeys(int(i) for i in items))


def accuracy(predictions: Sequence[int], truths: Sequence[int]) -> float:
    if len(predictions) != len(truths):
        raise ValidationError(
            f"{len(predictions)} predictions for {len(truths)} truths")
    if not truths:
        raise ValidationError("accuracy of an empty list is undefined")
    return sum(int(p) == int(t) for p, t in zip(predictions, truths)) / len(truths)


def f_measure(predicted: Sequence[int], truth: Sequence[int]) -> Optional[float]:
    """Harmonic mean of precision and recall after removing repeated words.

    Returns None when the ground truth is empty (recall undefined).
    """
    pred, gold = _dedup(predicted), _dedup(truth)
    if not pred:
        raise ValidationError("no predicted annotations")
    if not gold:
        return None
    hits = len(set(pred) & set(gold))
    precision, recall = hits / len(pred), hits / len(gold)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _corpus_f(params, docs, top_n):
    scores, excluded = [], 0
    for doc in docs:
        predicted, _ = predict_annotations(params, doc, top_n)
        f = f_measure(predicted, doc.annotations)
        if f is None:
            excluded += 1
        else:
            scores.append(f)
    return scores, excluded


def corpus_f_measure(params: ModelParams, docs: Sequence[Document], top_n: int = 5) -> float:
    """Mean per-document F-measure of the top ``top_n`` predicted annotations.

    Documents without ground-truth annotations are left out of the mean.
    """
    if not docs:
        raise ValidationError("empty corpus")
    scores, _ = _corpus_f(params, docs, top_n)
    if not scores:
        raise ValidationError("no document has ground-truth annotations")
    return float(np.mean(scores))


def chance_f_measure(A: int, truth_size: int, top_n: int = 5, trials: int = 100_000,
                     seed: int = 0) -> float:
    """Monte-Carlo F-measure of ``top_n`` uniformly random distinct guesses."""
    rng = np.random.default_rng(seed)
    truth = set(range(truth_size))
    total = 0.0
    for _ in range(trials):
        guess = rng.choice(A, size=top_n, replace=False)
        total += f_measure(guess, truth)
    return total / trials


@dataclass
class EvalReport:
    accuracy: float
    f_measure: Optional[float]
    per_class_accuracy: list
    documents: int
    excluded_empty_truth: int
    confusion: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(params: ModelParams, docs: Sequence[Document], top_n: int = 5) -> EvalReport:
    """Accuracy, per-class accuracy, confusion counts and mean F-measure.

    The F-measure is None when the model has fewer than ``top_n`` annotation
    words or no document carries annotations.
    """
    if not docs:
        raise ValidationError("empty corpus")
    C = params.C
    confusion = np.zeros((C, C), dtype=np.int64)
    for doc in docs:
        confusion[doc.label, predict_class(params, doc)[0]] += 1
    per_class = [float(confusion[c, c] / confusion[c].sum()) if confusion[c].sum() else 0.0
                 for c in range(C)]
    f, excluded = None, 0
    if params.vocab.A >= top_n:
        scores, excluded = _corpus_f(params, docs, top_n)
        if scores:
            f = float(np.mean(scores))
    return EvalReport(
        accuracy=float(np.trace(confusion) / len(docs)),
        f_measure=f,
        per_class_accuracy=per_class,
        documents=len(docs),
        excluded_empty_truth=excluded,
        confusion=confusion.tolist())
