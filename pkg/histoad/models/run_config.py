from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

from histoad.config import DEFAULT_OUTPUT_DIR, DEFAULT_WORKERS
from histoad.models.color import Interval, JitterRanges

CENTER_MODES = ("target-only", "all-classes", "exclude-target")

ABLATION_VARIANTS = (
    "full",
    "no-mixup",
    "hue-sat",
    "no-center-loss",
    "center-loss-all",
    "target-excluded",
    "reduced-classes",
    "reduced-per-group",
)
RANDOM_ENCODER_VARIANT = "random-encoder"


@dataclass
class RunConfig:
    seed: int = 0
    corpus_dir: str = "corpus"
    output_dir: str = DEFAULT_OUTPUT_DIR
    target_class: int = 1
    aux_classes: Optional[List[int]] = None
    feature_dim: int = 32
    epochs: int = 15
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float = 0.9
    center_weight: float = 1.0
    center_rate: float = 0.5
    center_mode: str = "target-only"
    mixup: bool = True
    hue_sat_only: bool = False
    aux_brightness: Optional[Interval] = (0.8, 1.2)
    aux_contrast: Optional[Interval] = (0.8, 1.2)
    svm_brightness: Optional[Interval] = (0.8, 1.2)
    svm_contrast: Optional[Interval] = (0.8, 1.2)
    svm_saturation: Optional[Interval] = (0.4, 1.6)
    svm_hue: Optional[Interval] = (-0.05, 0.05)
    svm_augment: bool = True
    histogram_budget: int = 200
    validation_fraction: float = 0.1
    nu: float = 0.1
    gamma: Optional[float] = None
    standardize: bool = True
    threshold: float = 0.0
    growth: float = 1.0
    tile_side: int = 64
    tile_stride: Optional[int] = None
    workers: int = DEFAULT_WORKERS

    @property
    def stride(self) -> int:
        return self.tile_side if self.tile_stride is None else self.tile_stride

    def aux_jitter(self) -> JitterRanges:
        ranges = JitterRanges(brightness=self.aux_brightness, contrast=self.aux_contrast)
        if self.hue_sat_only:
            ranges.saturation = self.svm_saturation
            ranges.hue = self.svm_hue
        return ranges

    def svm_jitter(self) -> JitterRanges:
        if not self.svm_augment:
            return JitterRanges()
        return JitterRanges(
            brightness=self.svm_brightness,
            contrast=self.svm_contrast,
            saturation=self.svm_saturation,
            hue=self.svm_hue,
        )

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **changes)


@dataclass
class CorpusConfig:
    n_classes: int = 8
    n_groups: int = 2
    tiles_per_class: int = 500
    target_tiles: int = 500
    test_tiles: int = 200
    tile_side: int = 64
    coverage: float = 0.3
    intensity: float = 1.0
    lesions: Tuple[str, ...] = ("vacuole", "streak", "blotch")
    shift_offset: Tuple[float, float, float] = (15.0, -10.0, 5.0)
    shift_gain: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0


@dataclass
class AblationConfig:
    base: RunConfig = field(default_factory=RunConfig)
    seeds: List[int] = field(default_factory=lambda: [0, 100, 200, 300, 400, 500])
    variants: List[str] = field(default_factory=lambda: list(ABLATION_VARIANTS))
    include_random_encoder: bool = False
