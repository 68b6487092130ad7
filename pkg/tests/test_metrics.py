from __future__ import annotations

import itertools
import math
import random

import numpy as np
import pytest

from surgreport.detection import threshold_detect
from surgreport.embeddings import EmbeddedText
from surgreport.metrics import (
    aggregate_caption_metrics,
    ap_from_ranked,
    average_precision,
    bertscore,
    bleu,
    classification_metrics,
    lcs_length,
    ngram_counts,
    rouge,
    tokenize,
)


def test_tokenize_lowercases_and_separates_punctuation():
    text = "First, during the 22-second preparation phase, the grasper holds the gallbladder."
    tokens = tokenize(text)
    assert tokens[0] == "first"
    assert tokens[1] == ","
    assert "22-second" in tokens
    assert tokens[-1] == "."


def test_tokenize_preserves_annotation_tokens():
    assert tokenize("the cystic_duct near calot-triangle-dissection") == [
        "the",
        "cystic_duct",
        "near",
        "calot-triangle-dissection",
    ]


def test_classification_metrics_identity():
    truth = [np.array([1, 0, 1]), np.array([0, 1, 0])]
    predicted = [np.array([1, 0, 1]), np.array([0, 1, 0])]
    m = classification_metrics(predicted, truth)
    assert m == (1.0, 1.0, 1.0, 1.0)


def test_classification_metrics_all_negative_predictions():
    truth = [np.array([1, 0]), np.array([1, 1])]
    predicted = [np.zeros(2), np.zeros(2)]
    m = classification_metrics(predicted, truth)
    assert m.precision == 0.0
    assert m.recall == 0.0
    assert m.f1 == 0.0
    assert m.accuracy == pytest.approx(0.25)


def test_classification_metrics_accepts_detection_sets():
    truth = [np.array([1.0, 0.0, 0.0])]
    predicted = [threshold_detect(np.array([0.9, 0.1, 0.2]), 0.5)]
    assert classification_metrics(predicted, truth).accuracy == 1.0


def test_classification_metrics_against_confusion_oracle():
    rng = random.Random(17)
    truth = [np.array([rng.randint(0, 1) for _ in range(21)], dtype=float) for _ in range(100)]
    predicted = [np.array([rng.randint(0, 1) for _ in range(21)], dtype=float) for _ in range(100)]
    m = classification_metrics(predicted, truth)
    tp = fp = fn = tn = 0
    for p_row, t_row in zip(predicted, truth):
        for p, t in zip(p_row, t_row):
            if p and t:
                tp += 1
            elif p and not t:
                fp += 1
            elif not p and t:
                fn += 1
            else:
                tn += 1
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    assert m.precision == pytest.approx(precision, abs=1e-12)
    assert m.recall == pytest.approx(recall, abs=1e-12)
    assert m.f1 == pytest.approx(2 * precision * recall / (precision + recall), abs=1e-12)
    assert m.accuracy == pytest.approx((tp + tn) / (tp + tn + fp + fn), abs=1e-12)


def sweep_oracle(pairs):
    """Threshold sweep over distinct scores, straight from the definition."""
    n_pos = sum(rel for _, rel in pairs)
    if n_pos == 0:
        return None
    thresholds = sorted({score for score, _ in pairs}, reverse=True)
    ap = 0.0
    previous_recall = 0.0
    for threshold in thresholds:
        kept = [(s, r) for s, r in pairs if s >= threshold]
        tp = sum(r for _, r in kept)
        precision = tp / len(kept)
        recall = tp / n_pos
        ap += (recall - previous_recall) * precision
        previous_recall = recall
    return ap


def test_ap_perfect_ranking():
    pairs = [(0.9, 1), (0.8, 1), (0.3, 0), (0.2, 0)]
    assert ap_from_ranked(pairs) == pytest.approx(1.0)


def test_ap_hand_sweep():
    pairs = [(0.9, 1), (0.5, 0), (0.1, 1)]
    assert ap_from_ranked(pairs) == pytest.approx(1 * 0.5 + 0.5 * (2 / 3), abs=1e-12)


def test_ap_zero_positives_is_none():
    assert ap_from_ranked([(0.5, 0), (0.1, 0)]) is None
    assert ap_from_ranked([]) is None


def test_ap_matches_exhaustive_enumeration_up_to_ten_items():
    scores = [1.0 - 0.05 * i for i in range(10)]
    for n in range(1, 11):
        for bits in itertools.product((0, 1), repeat=n):
            pairs = list(zip(scores[:n], bits))
            expected = sweep_oracle(pairs)
            actual = ap_from_ranked(pairs)
            if expected is None:
                assert actual is None
            else:
                assert actual == pytest.approx(expected, abs=1e-12)


def test_ap_handles_tied_scores_as_one_threshold():
    pairs = [(0.5, 1), (0.5, 0)]
    assert ap_from_ranked(pairs) == pytest.approx(sweep_oracle(pairs), abs=1e-12)


def test_ap_random_scores_approach_prevalence():
    rng = random.Random(23)
    pairs = [(rng.random(), 1 if rng.random() < 0.3 else 0) for _ in range(10_000)]
    prevalence = sum(r for _, r in pairs) / len(pairs)
    assert ap_from_ranked(pairs) == pytest.approx(prevalence, abs=0.05)


def test_average_precision_group_means():
    perfect = [(0.9, 1), (0.1, 0)]
    empty = [(0.5, 0)]
    ranked = [perfect] * 6 + [perfect] * 14 + [empty]
    result = average_precision(ranked, n_instruments=6)
    assert result.instruments == pytest.approx(1.0)
    assert result.targets == pytest.approx(1.0)
    assert result.excluded == (20,)
    assert result.per_class[20] is None


def bleu_oracle(candidate, reference, max_n=4):
    if not candidate:
        return 0.0
    precisions = []
    for n in range(1, max_n + 1):
        cand = [tuple(candidate[i : i + n]) for i in range(len(candidate) - n + 1)]
        ref = [tuple(reference[i : i + n]) for i in range(len(reference) - n + 1)]
        matched = 0
        for gram in set(cand):
            matched += min(cand.count(gram), ref.count(gram))
        if not cand or matched == 0:
            return 0.0
        precisions.append(matched / len(cand))
    bp = 1.0 if len(candidate) > len(reference) else math.exp(1 - len(reference) / len(candidate))
    return bp * math.exp(sum(math.log(p) for p in precisions) / max_n)


def test_bleu_identity():
    tokens = tokenize("the grasper is retracting the gallbladder")
    assert bleu(tokens, tokens) == 1.0


def test_bleu_disjoint_unigrams():
    assert bleu(["alpha", "beta"], ["gamma", "delta"]) == 0.0


def test_bleu_empty_candidate():
    assert bleu([], ["a", "b"]) == 0.0


def test_bleu_close_captions_match_oracle():
    candidate = tokenize("the grasper is retracting the gallbladder")
    reference = tokenize("the grasper is retracting the liver")
    assert bleu(candidate, reference) == pytest.approx(bleu_oracle(candidate, reference), abs=1e-12)


def test_bleu_brevity_penalty_only_when_short():
    reference = ["a", "b", "c", "d", "e"]
    longer = ["a", "b", "c", "d", "e", "f"]
    assert bleu(longer, reference) == pytest.approx(bleu_oracle(longer, reference), abs=1e-12)


def test_bleu_smoothing_flag():
    candidate = ["the", "hook"]
    reference = ["the", "grasper"]
    assert bleu(candidate, reference) == 0.0
    smoothed = bleu(candidate, reference, smoothing=True)
    assert 0.0 < smoothed < 1.0


def test_rouge_identity_all_variants():
    tokens = tokenize("the hook is dissecting the gallbladder")
    for variant in ("r1", "r2", "rL"):
        assert rouge(tokens, tokens, variant) == 1.0


def test_rouge1_hand_count():
    assert rouge(["the", "cat"], ["the", "cat", "sat"], "r1") == pytest.approx(2 / 3)


def test_rouge2_hand_count():
    assert rouge(["the", "cat"], ["the", "cat", "sat"], "r2") == pytest.approx(1 / 2)


def test_rouge_empty_reference():
    with pytest.raises(ValueError, match="reference"):
        rouge(["a"], [], "r1")


def lcs_oracle(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def test_rouge_l_matches_lcs_oracle():
    rng = random.Random(31)
    alphabet = ["a", "b", "c", "d"]
    for _ in range(1000):
        a = [rng.choice(alphabet) for _ in range(rng.randint(0, 12))]
        b = [rng.choice(alphabet) for _ in range(rng.randint(1, 12))]
        assert lcs_length(a, b) == lcs_oracle(a, b)
        assert rouge(a, b, "rL") == pytest.approx(lcs_oracle(a, b) / len(b), abs=1e-12)


def test_bertscore_identical_embeddings():
    vectors = np.eye(4)[:3]
    a = EmbeddedText(("x", "y", "z"), vectors)
    b = EmbeddedText(("x", "y", "z"), vectors.copy())
    assert bertscore(a, b) == (1.0, 1.0, 1.0)


def test_bertscore_orthogonal_embeddings():
    a = EmbeddedText(("x",), np.array([[1.0, 0.0]]))
    b = EmbeddedText(("y",), np.array([[0.0, 1.0]]))
    assert bertscore(a, b) == (0.0, 0.0, 0.0)


def test_bertscore_hand_built_vs_pairwise_oracle():
    cand = EmbeddedText(("a", "b"), np.array([[1.0, 0.0], [0.6, 0.8]]))
    ref = EmbeddedText(("u", "v", "w"), np.array([[0.0, 1.0], [1.0, 0.0], [0.8, 0.6]]))
    result = bertscore(cand, ref)
    sims = cand.vectors @ ref.vectors.T
    precision = np.mean([max(row) for row in sims])
    recall = np.mean([max(col) for col in sims.T])
    assert result.precision == pytest.approx(precision, abs=1e-12)
    assert result.recall == pytest.approx(recall, abs=1e-12)
    assert result.f1 == pytest.approx(2 * precision * recall / (precision + recall), abs=1e-12)


def test_bertscore_symmetry_under_swap():
    rng = np.random.default_rng(8)
    a = EmbeddedText(tuple("abc"), rng.normal(size=(3, 6)))
    b = EmbeddedText(tuple("wxyz"), rng.normal(size=(4, 6)))
    forward = bertscore(a, b)
    backward = bertscore(b, a)
    assert forward.precision == pytest.approx(backward.recall)
    assert forward.recall == pytest.approx(backward.precision)
    assert forward.f1 == pytest.approx(backward.f1)


def test_bertscore_dimension_mismatch_and_empty():
    a = EmbeddedText(("x",), np.array([[1.0, 0.0]]))
    c = EmbeddedText(("y",), np.array([[1.0, 0.0, 0.0]]))
    with pytest.raises(ValueError, match="dimension"):
        bertscore(a, c)
    empty = EmbeddedText((), np.zeros((0, 2)))
    with pytest.raises(ValueError, match="at least one token"):
        bertscore(a, empty)
    with pytest.raises(ValueError, match="2-D"):
        EmbeddedText((), np.zeros(0))


def test_ngram_counts():
    assert ngram_counts(["a", "b", "a", "b"], 2) == {("a", "b"): 2, ("b", "a"): 1}


def test_aggregate_caption_metrics_identity_corpus():
    pairs = [
        ("During phase preparation, no instrument is active",) * 2,
        ("the hook is dissecting the gallbladder",) * 2,
    ]
    report = aggregate_caption_metrics(pairs)
    assert report.bleu == 1.0
    assert report.rouge1 == 1.0
    assert report.rouge2 == 1.0
    assert report.rougeL == 1.0
    assert report.bert_f1 is None


def test_aggregate_caption_metrics_perturbed_below_one():
    pairs = [
        (
            "During phase preparation, the grasper is grasping the liver",
            "During phase preparation, the grasper is grasping the gallbladder",
        )
    ]
    report = aggregate_caption_metrics(pairs)
    assert report.bleu < 1.0
    assert report.rouge1 < 1.0


def test_metric_report_record_fields():
    report = aggregate_caption_metrics([("a b c d", "a b c d")])
    record = report.to_record()
    assert set(record) == set(report.FIELDS)
    assert record["precision"] is None
