from dataclasses import dataclass
from typing import Tuple

import numpy as np

from histoad.errors import ParameterError


@dataclass
class CenterState:
    """Class centers a_k, compactness subset K (1-based labels), EMA rate beta and weight lambda"""

    centers: np.ndarray
    subset: Tuple[int, ...]
    beta: float = 0.5
    weight: float = 1.0

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.subset = tuple(sorted(int(k) for k in self.subset))
        n = self.centers.shape[0]
        if not self.subset:
            raise ParameterError("Center-loss subset K must contain at least one class")
        if self.subset[0] < 1 or self.subset[-1] > n:
            raise ParameterError(f"Center-loss subset {self.subset} outside [1, {n}]")
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"Center rate beta must lie in [0, 1], got {self.beta}")
        if self.weight < 0:
            raise ParameterError(f"Center-loss weight must be >= 0, got {self.weight}")

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def center(self, k: int) -> np.ndarray:
        return self.centers[k - 1]
