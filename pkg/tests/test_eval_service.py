import itertools

import numpy as np
import pytest

from histoad.errors import ParameterError
from histoad.models.metrics import LabeledScores
from histoad.services.eval_service import EvalService


def brute_force_auroc(data):
    # a positive (anomalous) tile should score lower than a negative one
    positives = data.scores[data.labels]
    negatives = data.scores[~data.labels]
    wins = (positives[:, None] < negatives[None, :]).sum() + 0.5 * (positives[:, None] == negatives[None, :]).sum()
    return wins / (len(positives) * len(negatives))


def labeled(sensitivity_hits, n_pos, specificity_hits, n_neg):
    scores = [-1.0] * sensitivity_hits + [1.0] * (n_pos - sensitivity_hits)
    scores += [1.0] * specificity_hits + [-1.0] * (n_neg - specificity_hits)
    labels = [True] * n_pos + [False] * n_neg
    return LabeledScores(np.array(scores), np.array(labels))


def test_confusion_counts_scores_below_threshold_as_positive():
    data = LabeledScores([-1.0, 0.0, 1.0, -2.0], [True, True, False, False])
    c = EvalService.confusion_at(data, 0.0)
    assert (c.tp, c.fn, c.tn, c.fp) == (1, 1, 1, 1)
    assert c.total == 4


def test_balanced_accuracy():
    assert EvalService.balanced_accuracy(labeled(9, 10, 8, 10)) == pytest.approx(0.85)
    assert EvalService.balanced_accuracy(labeled(5, 5, 5, 5)) == 1.0


def test_balanced_accuracy_needs_both_classes():
    with pytest.raises(ParameterError):
        EvalService.balanced_accuracy(LabeledScores([1.0, 2.0], [False, False]))


def test_f1_score():
    data = labeled(8, 10, 0, 2)
    assert EvalService.f1_score(data).value == pytest.approx(0.8)
    assert EvalService.f1_score(labeled(4, 4, 4, 4)).value == 1.0


def test_f1_without_predicted_positives_is_degenerate():
    result = EvalService.f1_score(LabeledScores([1.0, 2.0], [True, False]))
    assert result.value == 0.0
    assert result.degenerate


def test_auroc_three_of_four_pairs():
    data = LabeledScores([1.0, 2.0, 3.0, 4.0], [True, False, True, False])
    assert EvalService.auroc(data) == pytest.approx(0.75)


def test_auroc_matches_brute_force_with_ties(rng):
    data = LabeledScores(rng.integers(0, 12, size=300).astype(float), rng.random(300) < 0.3)
    assert EvalService.auroc(data) == pytest.approx(brute_force_auroc(data), abs=1e-12)


def test_auroc_extremes_and_label_flip(rng):
    assert EvalService.auroc(labeled(5, 5, 5, 5)) == 1.0
    data = LabeledScores(rng.normal(size=200), rng.random(200) < 0.5)
    flipped = LabeledScores(data.scores, ~data.labels)
    assert EvalService.auroc(flipped) == pytest.approx(1.0 - EvalService.auroc(data), abs=1e-12)


def test_roc_of_identical_scores_is_the_diagonal():
    points = EvalService.roc_points(LabeledScores([0.5] * 4, [True, False, True, False]))
    assert points == [(0.0, 0.0), (1.0, 1.0)]


def test_roc_is_monotone(rng):
    points = np.array(EvalService.roc_points(LabeledScores(rng.normal(size=50), rng.random(50) < 0.4)))
    assert np.all(np.diff(points, axis=0) >= 0)
    assert tuple(points[-1]) == (1.0, 1.0)


def test_seed_summary():
    summary = EvalService.seed_summary([0.0, 2.0])
    assert summary.mean == 1.0
    assert summary.std_error == pytest.approx(1.0)
    assert summary.n_seeds == 2
    with pytest.raises(ParameterError):
        EvalService.seed_summary([0.5])


def test_mann_whitney_exact():
    result = EvalService.mann_whitney_two_sided([1, 2, 3], [4, 5, 6])
    assert result.u == 0.0
    assert result.exact
    assert result.p_value == pytest.approx(0.1)


def test_mann_whitney_identical_samples():
    assert EvalService.mann_whitney_two_sided([1, 2, 3], [1, 2, 3]).p_value == pytest.approx(1.0)


def test_mann_whitney_is_symmetric(rng):
    a, b = rng.normal(size=7), rng.normal(0.5, 1.0, size=6)
    assert EvalService.mann_whitney_two_sided(a, b).p_value == pytest.approx(
        EvalService.mann_whitney_two_sided(b, a).p_value
    )


def test_mann_whitney_exact_p_matches_enumeration(rng):
    a = rng.integers(0, 5, size=4).astype(float)
    b = rng.integers(0, 5, size=5).astype(float)
    pooled = np.concatenate([a, b])
    observed = EvalService.mann_whitney_two_sided(a, b)
    u_values = []
    for picked in itertools.combinations(range(len(pooled)), len(a)):
        rest = np.delete(pooled, picked)
        u_values.append(EvalService.mann_whitney_two_sided(pooled[list(picked)], rest).u)
    u_values = np.array(u_values)
    expected = 2 * min((u_values <= observed.u + 1e-9).mean(), (u_values >= observed.u - 1e-9).mean())
    assert observed.p_value == pytest.approx(min(1.0, expected))


def test_mann_whitney_normal_approximation(rng):
    result = EvalService.mann_whitney_two_sided(rng.normal(size=40), rng.normal(3.0, 1.0, size=40))
    assert not result.exact
    assert result.p_value < 1e-6


def test_metrics_report():
    report = EvalService.metrics_report(labeled(9, 10, 8, 10))
    assert report.balanced_accuracy == pytest.approx(0.85)
    assert report.sensitivity == pytest.approx(0.9)
    assert report.specificity == pytest.approx(0.8)
    assert report.n_positive == report.n_negative == 10


def test_duplicated_negatives_keep_balanced_accuracy_but_move_f1():
    data = labeled(8, 10, 6, 10)
    negatives = ~data.labels
    doubled = LabeledScores(
        np.concatenate([data.scores, data.scores[negatives]]), np.concatenate([data.labels, data.labels[negatives]])
    )
    assert EvalService.balanced_accuracy(doubled) == pytest.approx(EvalService.balanced_accuracy(data), abs=1e-12)
    assert EvalService.f1_score(doubled).value < EvalService.f1_score(data).value


def test_auroc_matches_brute_force_on_random_sets(rng):
    for _ in range(100):
        n = int(rng.integers(2, 501))
        labels = rng.random(n) < rng.uniform(0.1, 0.9)
        labels[:2] = [True, False]
        scores = rng.integers(0, 20, size=n).astype(float) if rng.random() < 0.5 else rng.normal(size=n)
        data = LabeledScores(scores, labels)
        assert EvalService.auroc(data) == pytest.approx(brute_force_auroc(data), abs=1e-12)
