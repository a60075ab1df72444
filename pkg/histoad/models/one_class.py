from dataclasses import dataclass

import numpy as np

STD_FLOOR = 1e-8


@dataclass
class StandardizerStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "StandardizerStats":
        return cls(features.mean(axis=0), np.maximum(features.std(axis=0), STD_FLOOR))

    @classmethod
    def identity(cls, dim: int) -> "StandardizerStats":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.std


@dataclass
class OneClassModel:
    """Fitted nu one-class SVM; decision = sum coef_i K(sv_i, x) - rho, negative means anomalous"""

    support_vectors: np.ndarray
    coefficients: np.ndarray
    rho: float
    gamma: float
    nu: float
    standardizer: StandardizerStats
    kernel: str = "rbf"
    n_train: int = 0
    kkt_residual: float = 0.0

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    @property
    def upper_bound(self) -> float:
        return 1.0 / (self.nu * self.n_train)


@dataclass(frozen=True)
class AnomalyScore:
    score: float

    @property
    def is_anomalous(self) -> bool:
        # exact zero is normal
        return self.score < 0.0
