"""Evaluation metrics: classification, average precision, BLEU, ROUGE, BERTScore.

Text metrics operate on tokens produced by ``tokenize``: lowercase, with
punctuation separated into its own tokens and whitespace splitting;
underscores and hyphens inside annotation tokens (cystic_duct,
calot-triangle-dissection) are preserved so machine-generated captions
tokenize reproducibly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from math import exp, log
from typing import NamedTuple

import numpy as np

from .detection import DetectionSet
from .embeddings import EmbeddedText, EmbeddingTable

_PUNCTUATION = set(".,;:!?\"'()[]{}")


def tokenize(text: str) -> list[str]:
    """Deterministic tokenization for caption scoring."""
    out = []
    for ch in text.lower():
        if ch in _PUNCTUATION:
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return "".join(out).split()


def ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidate: list[str], reference: list[str], max_n: int = 4, smoothing: bool = False
) -> float:
    """Geometric mean of clipped n-gram precisions times the brevity penalty.

    Uniform weights 1/max_n; BP = 1 when the candidate is longer than the
    reference, else exp(1 - r/c). Without smoothing, a zero precision at any
    order yields 0; with smoothing, zero counts at orders above 1 fall back
    to (matches + 1) / (total + 1).
    """
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    c, r = len(candidate), len(reference)
    if c == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = ngram_counts(candidate, n)
        ref_counts = ngram_counts(reference, n)
        total = sum(cand_counts.values())
        matched = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        if matched == 0 and smoothing and n > 1:
            precision = (matched + 1) / (total + 1)
        elif matched == 0 or total == 0:
            return 0.0
        else:
            precision = matched / total
        log_sum += log(precision) / max_n
    brevity = 1.0 if c > r else exp(1.0 - r / c)
    return brevity * exp(log_sum)


def lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence length (two-row dynamic program)."""
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            if token == other:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[len(b)]


def rouge(candidate: list[str], reference: list[str], variant: str = "r1") -> float:
    """Recall-style overlap against the reference.

    r1 and r2 divide the clipped overlapping n-gram count by the reference
    n-gram count; rL divides the LCS length by the reference length.
    """
    if not reference:
        raise ValueError("reference must be non-empty")
    if variant == "rL":
        return lcs_length(candidate, reference) / len(reference)
    if variant not in ("r1", "r2"):
        raise ValueError(f"variant must be 'r1', 'r2', or 'rL', got {variant!r}")
    n = 1 if variant == "r1" else 2
    ref_counts = ngram_counts(reference, n)
    total = sum(ref_counts.values())
    if total == 0:
        return 0.0
    cand_counts = ngram_counts(candidate, n)
    overlap = sum(min(count, cand_counts[gram]) for gram, count in ref_counts.items())
    return overlap / total


class BertScore(NamedTuple):
    precision: float
    recall: float
    f1: float


def bertscore(candidate: EmbeddedText, reference: EmbeddedText) -> BertScore:
    """Greedy cosine matching between contextual token embeddings.

    Precision averages, over candidate tokens, the best similarity to any
    reference token; recall is symmetric; f1 is the harmonic mean (0 when
    both are 0).
    """
    if len(candidate.tokens) == 0 or len(reference.tokens) == 0:
        raise ValueError("both texts must contain at least one token")
    if candidate.dim != reference.dim:
        raise ValueError(f"embedding dimensions differ: {candidate.dim} vs {reference.dim}")
    similarity = candidate.vectors @ reference.vectors.T
    precision = float(similarity.max(axis=1).mean())
    recall = float(similarity.max(axis=0).mean())
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return BertScore(precision, recall, f1)


class ClassificationMetrics(NamedTuple):
    precision: float
    recall: float
    f1: float
    accuracy: float


def _as_bits(predicted, n_classes: int) -> np.ndarray:
    if isinstance(predicted, DetectionSet):
        bits = np.zeros(n_classes)
        bits[sorted(predicted.detected)] = 1.0
        return bits
    return np.asarray(predicted, dtype=float)


def classification_metrics(predicted: list, truth: list) -> ClassificationMetrics:
    """Micro-averaged precision/recall/F1/accuracy over all (frame, class) cells.

    Degenerate conventions: precision is 0 with no predicted positives,
    recall is 0 with no true positives in the truth, and F1 is 0 when both
    precision and recall are 0.
    """
    if len(predicted) == 0 or len(predicted) != len(truth):
        raise ValueError(f"need equal non-empty lists, got {len(predicted)} and {len(truth)}")
    truth_matrix = np.asarray([np.asarray(t, dtype=float) for t in truth])
    n_classes = truth_matrix.shape[1]
    pred_matrix = np.asarray([_as_bits(p, n_classes) for p in predicted])
    if pred_matrix.shape != truth_matrix.shape:
        raise ValueError(f"shape mismatch: {pred_matrix.shape} vs {truth_matrix.shape}")
    tp = float(((pred_matrix == 1) & (truth_matrix == 1)).sum())
    fp = float(((pred_matrix == 1) & (truth_matrix == 0)).sum())
    fn = float(((pred_matrix == 0) & (truth_matrix == 1)).sum())
    cells = pred_matrix.size
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    accuracy = float((pred_matrix == truth_matrix).sum()) / cells
    return ClassificationMetrics(precision, recall, f1, accuracy)


def ap_from_ranked(pairs: list[tuple[float, int]]) -> float | None:
    """Area under the precision-recall curve via the threshold sweep.

    Sums (R_n - R_{n-1}) * P_n over thresholds at each distinct score in
    descending order. Returns None when the class has no positives.
    """
    if not pairs:
        return None
    scores = np.asarray([s for s, _ in pairs], dtype=float)
    relevance = np.asarray([r for _, r in pairs], dtype=float)
    n_pos = relevance.sum()
    if n_pos == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    cum_tp = np.cumsum(relevance[order])
    # Threshold boundaries: the last item of each distinct-score group.
    last_of_group = np.nonzero(np.diff(sorted_scores, append=-np.inf))[0]
    recall = cum_tp[last_of_group] / n_pos
    precision = cum_tp[last_of_group] / (last_of_group + 1)
    previous_recall = np.concatenate(([0.0], recall[:-1]))
    return float(((recall - previous_recall) * precision).sum())


class AveragePrecision(NamedTuple):
    per_class: tuple[float | None, ...]
    instruments: float | None
    targets: float | None
    excluded: tuple[int, ...]


def average_precision(
    ranked: list[list[tuple[float, int]]], n_instruments: int = 6
) -> AveragePrecision:
    """Per-class AP plus means over the instrument and target class groups.

    ``ranked`` holds one (score, relevance-bit) list per detection class,
    instruments first. Classes without positives are excluded from the
    means and reported in ``excluded``.
    """
    per_class = tuple(ap_from_ranked(pairs) for pairs in ranked)
    excluded = tuple(i for i, ap in enumerate(per_class) if ap is None)
    instrument_aps = [ap for ap in per_class[:n_instruments] if ap is not None]
    target_aps = [ap for ap in per_class[n_instruments:] if ap is not None]
    return AveragePrecision(
        per_class=per_class,
        instruments=float(np.mean(instrument_aps)) if instrument_aps else None,
        targets=float(np.mean(target_aps)) if target_aps else None,
        excluded=excluded,
    )


@dataclass(frozen=True)
class MetricReport:
    """All metric fields for one evaluation scope; unset fields stay None."""

    bleu: float | None = None
    rouge1: float | None = None
    rouge2: float | None = None
    rougeL: float | None = None
    bert_precision: float | None = None
    bert_recall: float | None = None
    bert_f1: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    accuracy: float | None = None

    FIELDS = (
        "bleu",
        "rouge1",
        "rouge2",
        "rougeL",
        "bert_precision",
        "bert_recall",
        "bert_f1",
        "precision",
        "recall",
        "f1",
        "accuracy",
    )

    def to_record(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}


def aggregate_caption_metrics(
    pairs: list[tuple[str, str]], embedding_table: EmbeddingTable | None = None
) -> MetricReport:
    """Corpus scores for (generated, reference) caption pairs.

    Each metric is the mean of per-pair sentence scores. BERTScore is
    computed only when the table provides embeddings for every caption in
    the corpus; otherwise those fields stay None.
    """
    if not pairs:
        raise ValueError("cannot aggregate metrics over an empty corpus")
    bleu_scores, r1, r2, rl = [], [], [], []
    bert: list[BertScore] | None = [] if embedding_table is not None else None
    for generated, reference in pairs:
        cand, ref = tokenize(generated), tokenize(reference)
        bleu_scores.append(bleu(cand, ref))
        r1.append(rouge(cand, ref, "r1"))
        r2.append(rouge(cand, ref, "r2"))
        rl.append(rouge(cand, ref, "rL"))
        if bert is not None:
            cand_emb = embedding_table.get(cand)
            ref_emb = embedding_table.get(ref)
            if cand_emb is None or ref_emb is None:
                bert = None
            else:
                bert.append(bertscore(cand_emb, ref_emb))
    report = MetricReport(
        bleu=float(np.mean(bleu_scores)),
        rouge1=float(np.mean(r1)),
        rouge2=float(np.mean(r2)),
        rougeL=float(np.mean(rl)),
    )
    if bert:
        report = replace(
            report,
            bert_precision=float(np.mean([b.precision for b in bert])),
            bert_recall=float(np.mean([b.recall for b in bert])),
            bert_f1=float(np.mean([b.f1 for b in bert])),
        )
    return report
