from dataclasses import dataclass
from typing import Tuple

import numpy as np

from histoad.errors import ParameterError

RGB = Tuple[float, float, float]

LESION_TYPES = ("vacuole", "streak", "blotch")

SPLITS = (
    "train-aux",
    "train-target",
    "test-normal",
    "test-anomalous",
    "test-normal-shifted",
    "test-anomalous-shifted",
)


@dataclass(frozen=True)
class Palette:
    """Per-channel colors of the three strata; tissue ramps from cytoplasm to background"""

    nuclei: RGB
    nuclei_spread: RGB
    cytoplasm: RGB
    background: RGB


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    stain_group: int
    blob_density: float  # expected cells per 64 x 64 px
    orientation: float  # dominant cell angle, radians
    orientation_strength: float  # 0 = isotropic, 1 = all cells aligned
    scale: float  # nucleus semi-minor axis, px
    elongation: float
    field_grain: Tuple[float, float]  # tissue field smoothing sigma (rows, cols) at 64 x 64 px
    palette: Palette


@dataclass(frozen=True)
class AnomalySpec:
    lesion: str
    intensity: float = 1.0
    coverage: float = 0.3

    def __post_init__(self):
        if self.lesion not in LESION_TYPES:
            raise ParameterError(f"Unknown lesion type '{self.lesion}', expected one of {LESION_TYPES}")
        if not 0.0 < self.coverage <= 1.0:
            raise ParameterError(f"Lesion coverage must lie in (0, 1], got {self.coverage}")
        if not 0.0 < self.intensity <= 1.0:
            raise ParameterError(f"Lesion intensity must lie in (0, 1], got {self.intensity}")


@dataclass(frozen=True)
class ChannelShift:
    """Global per-channel affine color change: out = gain * x + offset, clamped to [0, 255]"""

    offset: RGB = (0.0, 0.0, 0.0)
    gain: RGB = (1.0, 1.0, 1.0)

    @property
    def is_identity(self) -> bool:
        return self.offset == (0.0, 0.0, 0.0) and self.gain == (1.0, 1.0, 1.0)

    def inverse(self) -> "ChannelShift":
        return ChannelShift(
            offset=tuple(-o / g for o, g in zip(self.offset, self.gain)),
            gain=tuple(1.0 / g for g in self.gain),
        )


@dataclass
class SynthTile:
    pixels: np.ndarray
    nuclei_mask: np.ndarray
    cell_count: int
