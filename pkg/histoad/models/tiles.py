from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from histoad.models.one_class import AnomalyScore


@dataclass
class ImageTile:
    pixels: np.ndarray
    source_id: str = ""
    row: int = 0
    col: int = 0
    label: Optional[int] = None

    @property
    def tile_id(self) -> str:
        return f"{self.source_id}@{self.row},{self.col}"


@dataclass
class TileExtraction:
    tiles: List[ImageTile]
    undersized: bool = False


ScoredTile = Tuple[ImageTile, AnomalyScore]


@dataclass
class TileScore:
    row: int
    col: int
    score: float
    is_anomalous: bool


@dataclass
class SlideReport:
    slide_id: str
    tiles: List[TileScore] = field(default_factory=list)
    anomaly_fraction: float = 0.0
    logistic_score: float = 0.0
    threshold: float = 0.0
    growth: float = 1.0

    @property
    def n_tiles(self) -> int:
        return len(self.tiles)
