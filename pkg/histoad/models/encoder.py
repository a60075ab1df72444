from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional

import numpy as np

from histoad.errors import ParameterError, ShapeError
from histoad.models.centers import CenterState


@dataclass
class Layer:
    weights: np.ndarray
    bias: np.ndarray

    def copy(self) -> "Layer":
        return Layer(self.weights.copy(), self.bias.copy())


@dataclass
class EncoderModel:
    """Convolutional feature extractor (stride-2 3x3 blocks) plus a two-layer classifier head"""

    conv_blocks: List[Layer]
    head_hidden: Layer
    head_out: Layer
    feature_dim: int
    n_classes: int

    @property
    def downsampling(self) -> int:
        return 2 ** len(self.conv_blocks)

    def layers(self) -> List[Layer]:
        return [*self.conv_blocks, self.head_hidden, self.head_out]

    def parameters(self) -> Iterator[np.ndarray]:
        """Weights in canonical order: each block's kernel then bias, hidden layer, output layer"""
        for layer in self.layers():
            yield layer.weights
            yield layer.bias

    def copy(self) -> "EncoderModel":
        return EncoderModel(
            conv_blocks=[block.copy() for block in self.conv_blocks],
            head_hidden=self.head_hidden.copy(),
            head_out=self.head_out.copy(),
            feature_dim=self.feature_dim,
            n_classes=self.n_classes,
        )

    @classmethod
    def from_parameters(cls, template: "EncoderModel", arrays: List[np.ndarray]) -> "EncoderModel":
        pairs = [Layer(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)]
        return cls(
            conv_blocks=pairs[:-2],
            head_hidden=pairs[-2],
            head_out=pairs[-1],
            feature_dim=template.feature_dim,
            n_classes=template.n_classes,
        )


@dataclass
class Batch:
    tiles: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.tiles = np.asarray(self.tiles, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.tiles.ndim != 4 or self.tiles.shape[-1] != 3:
            raise ShapeError(f"Batch tiles must be m x H x W x 3, got {self.tiles.shape}")
        if self.tiles.shape[0] < 1:
            raise ParameterError("Batch must contain at least one tile")
        if self.labels.shape != (self.tiles.shape[0],):
            raise ShapeError(f"Expected {self.tiles.shape[0]} labels, got shape {self.labels.shape}")

    @property
    def size(self) -> int:
        return self.tiles.shape[0]

    def check_labels(self, n_classes: int) -> None:
        if self.labels.min() < 1 or self.labels.max() > n_classes:
            raise ParameterError(f"Batch labels must lie in [1, {n_classes}]")


@dataclass
class Gradients:
    conv_blocks: List[Layer]
    head_hidden: Layer
    head_out: Layer
    feature_grads: np.ndarray

    def parameters(self) -> Iterator[np.ndarray]:
        for layer in [*self.conv_blocks, self.head_hidden, self.head_out]:
            yield layer.weights
            yield layer.bias


@dataclass
class SgdState:
    learning_rate: float
    momentum: float
    velocity: List[np.ndarray]
    steps: int = 0

    @classmethod
    def for_model(cls, model: EncoderModel, learning_rate: float, momentum: float) -> "SgdState":
        if not 0.0 <= momentum < 1.0:
            raise ParameterError(f"Momentum must lie in [0, 1), got {momentum}")
        return cls(learning_rate, momentum, [np.zeros_like(p) for p in model.parameters()])


@dataclass
class ForwardCache:
    """Intermediate activations kept by a forward pass for the backward pass"""

    inputs: List[np.ndarray] = field(default_factory=list)
    columns: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    features: Optional[np.ndarray] = None
    hidden_pre: Optional[np.ndarray] = None
    hidden: Optional[np.ndarray] = None


@dataclass
class EncoderArtifact:
    """Everything downstream scoring needs from a trained encoder"""

    model: EncoderModel
    centers: CenterState
    channel_means: np.ndarray
    class_ids: List[int]
    target_class: int
    epoch: int = 0
    val_accuracy: float = 0.0
    meta: Dict[str, str] = field(default_factory=dict)

    def label_of(self, class_id: int) -> int:
        """Auxiliary-task label (1-based) of an original corpus class id"""
        return self.class_ids.index(class_id) + 1
