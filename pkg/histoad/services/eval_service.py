from typing import List, Sequence, Tuple

import numpy as np
from scipy.stats import norm, rankdata
from sklearn import metrics

from histoad.errors import ParameterError
from histoad.models.metrics import (
    Confusion,
    F1Result,
    LabeledScores,
    MannWhitneyResult,
    MetricsReport,
    SeedSummary,
)

EXACT_MANN_WHITNEY_LIMIT = 20


class EvalService:
    """Detection metrics; a score below the threshold is an anomalous (positive) prediction"""

    @staticmethod
    def predictions(data: LabeledScores, threshold: float) -> np.ndarray:
        return data.scores < threshold

    @staticmethod
    def confusion_at(data: LabeledScores, threshold: float) -> Confusion:
        tn, fp, fn, tp = metrics.confusion_matrix(
            data.labels, EvalService.predictions(data, threshold), labels=[False, True]
        ).ravel()
        return Confusion(tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn))

    @staticmethod
    def balanced_accuracy(data: LabeledScores, threshold: float = 0.0) -> float:
        data.require_both_classes()
        return float(metrics.balanced_accuracy_score(data.labels, EvalService.predictions(data, threshold)))

    @staticmethod
    def f1_score(data: LabeledScores, threshold: float = 0.0) -> F1Result:
        predicted = EvalService.predictions(data, threshold)
        if not predicted.any() or not data.labels.any():
            return F1Result(0.0, degenerate=True)
        return F1Result(float(metrics.f1_score(data.labels, predicted)))

    @staticmethod
    def roc_points(data: LabeledScores) -> List[Tuple[float, float]]:
        """(FPR, TPR) from (0, 0) to (1, 1), one point per distinct score, lowest (most anomalous) first"""
        data.require_both_classes()
        fpr, tpr, _ = metrics.roc_curve(data.labels, -data.scores, drop_intermediate=False)
        return [(float(f), float(t)) for f, t in zip(fpr, tpr)]

    @staticmethod
    def auroc(data: LabeledScores) -> float:
        data.require_both_classes()
        return float(metrics.roc_auc_score(data.labels, -data.scores))

    @staticmethod
    def seed_summary(values: Sequence[float]) -> SeedSummary:
        values = [float(v) for v in values]
        if len(values) < 2:
            raise ParameterError(f"Need at least 2 seeds for a standard error, got {len(values)}")
        arr = np.asarray(values)
        return SeedSummary(values, float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(len(arr))))

    @staticmethod
    def mann_whitney_two_sided(a: Sequence[float], b: Sequence[float]) -> MannWhitneyResult:
        """U of sample a with midranks; exact null distribution up to 20 values, tie-corrected normal beyond"""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if len(a) < 1 or len(b) < 1:
            raise ParameterError("Both samples need at least one value")
        n_a, n_b = len(a), len(b)
        ranks = rankdata(np.concatenate([a, b]))
        u = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2.0)

        if n_a + n_b <= EXACT_MANN_WHITNEY_LIMIT:
            p = EvalService._exact_p(ranks, n_a, u)
            return MannWhitneyResult(u, p, exact=True)

        n = n_a + n_b
        _, tie_sizes = np.unique(ranks, return_counts=True)
        tie_term = float((tie_sizes**3 - tie_sizes).sum()) / (n * (n - 1))
        variance = n_a * n_b / 12.0 * ((n + 1) - tie_term)
        if variance <= 0.0:
            return MannWhitneyResult(u, 1.0, exact=False)
        z = max(abs(u - n_a * n_b / 2.0) - 0.5, 0.0) / np.sqrt(variance)
        return MannWhitneyResult(u, float(min(1.0, 2.0 * norm.sf(z))), exact=False)

    @staticmethod
    def metrics_report(data: LabeledScores, threshold: float = 0.0) -> MetricsReport:
        data.require_both_classes()
        confusion = EvalService.confusion_at(data, threshold)
        f1 = EvalService.f1_score(data, threshold)
        sensitivity = confusion.tp / (confusion.tp + confusion.fn)
        specificity = confusion.tn / (confusion.tn + confusion.fp)
        return MetricsReport(
            n_positive=data.n_positive,
            n_negative=data.n_negative,
            threshold=float(threshold),
            balanced_accuracy=(sensitivity + specificity) / 2.0,
            sensitivity=sensitivity,
            specificity=specificity,
            f1=f1.value,
            f1_degenerate=f1.degenerate,
            auroc=EvalService.auroc(data),
            confusion=confusion,
            mann_whitney=EvalService.mann_whitney_two_sided(
                data.scores[data.labels], data.scores[~data.labels]
            ),
        )

    @staticmethod
    def _exact_p(ranks: np.ndarray, n_a: int, u: float) -> float:
        # midranks doubled are integers; count subsets of size n_a by doubled rank sum
        doubled = np.rint(ranks * 2).astype(np.int64)
        max_sum = int(doubled.sum())
        ways = np.zeros((n_a + 1, max_sum + 1))
        ways[0, 0] = 1.0
        for r in doubled:
            for k in range(n_a, 0, -1):
                ways[k, r:] += ways[k - 1, : max_sum + 1 - r]
        counts = ways[n_a]
        offset = n_a * (n_a + 1)
        u_values = (np.arange(max_sum + 1) - offset) / 2.0
        total = counts.sum()
        lower = counts[u_values <= u + 1e-9].sum() / total
        upper = counts[u_values >= u - 1e-9].sum() / total
        return float(min(1.0, 2.0 * min(lower, upper)))
