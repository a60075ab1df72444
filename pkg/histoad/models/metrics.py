from dataclasses import dataclass
from typing import List

import numpy as np

from histoad.errors import ParameterError, ShapeError


@dataclass
class LabeledScores:
    """Scores with ground truth; True marks an anomalous (positive) tile"""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=bool)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ShapeError(f"Scores {self.scores.shape} and labels {self.labels.shape} must be equal-length lists")

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def n_negative(self) -> int:
        return int((~self.labels).sum())

    def require_both_classes(self) -> None:
        if self.n_positive == 0 or self.n_negative == 0:
            raise ParameterError(
                f"Need anomalous and normal examples, got {self.n_positive} positive / {self.n_negative} negative"
            )


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class F1Result:
    value: float
    degenerate: bool = False


@dataclass
class SeedSummary:
    values: List[float]
    mean: float
    std_error: float

    @property
    def n_seeds(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p_value: float
    exact: bool


@dataclass
class MetricsReport:
    n_positive: int
    n_negative: int
    threshold: float
    balanced_accuracy: float
    sensitivity: float
    specificity: float
    f1: float
    f1_degenerate: bool
    auroc: float
    confusion: Confusion
    mann_whitney: MannWhitneyResult

