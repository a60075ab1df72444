from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from histoad.errors import ConvergenceError, ParameterError, ShapeError
from histoad.models.centers import CenterState
from histoad.models.run_config import CENTER_MODES

PROB_FLOOR = 1e-300

ClassMeans = Dict[int, np.ndarray]


class ObjectiveService:
    """Cross-entropy plus the per-class normalized, subset-restricted center loss"""

    @staticmethod
    def softmax_probs(logits: np.ndarray) -> np.ndarray:
        return softmax(np.asarray(logits, dtype=np.float64), axis=1)

    @staticmethod
    def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
        """Batch-summed negative log-likelihood of the true (1-based) labels"""
        labels = np.asarray(labels)
        if labels.min() < 1 or labels.max() > probs.shape[1]:
            raise ParameterError(f"Labels must lie in [1, {probs.shape[1]}]")
        picked = probs[np.arange(len(labels)), labels - 1]
        # saturated model, not a crash
        return float(-np.log(np.maximum(picked, PROB_FLOOR)).sum())

    @staticmethod
    def batch_class_means(features: np.ndarray, labels: np.ndarray) -> ClassMeans:
        labels = np.asarray(labels)
        if features.shape[0] < 1:
            raise ParameterError("Cannot average an empty batch")
        return {int(k): features[labels == k].mean(axis=0) for k in np.unique(labels)}

    @staticmethod
    def center_loss(features: np.ndarray, labels: np.ndarray, state: CenterState) -> float:
        ObjectiveService._check_dims(features, labels, state)
        total = 0.0
        for k in state.subset:
            members = features[labels == k]
            if len(members) == 0:
                continue
            total += 0.5 * float(((members - state.center(k)) ** 2).sum()) / len(members)
        return total

    @staticmethod
    def center_loss_grad(features: np.ndarray, labels: np.ndarray, state: CenterState) -> np.ndarray:
        """dL_CL/dx_i with centers held constant"""
        ObjectiveService._check_dims(features, labels, state)
        grad = np.zeros_like(features, dtype=np.float64)
        for k in state.subset:
            mask = labels == k
            count = int(mask.sum())
            if count:
                grad[mask] = (features[mask] - state.center(k)) / count
        return grad

    @staticmethod
    def combined_loss(
        logits: np.ndarray, features: np.ndarray, labels: np.ndarray, state: CenterState
    ) -> Tuple[float, float, float]:
        """Returns (L, L_CE, L_CL) with L = L_CE + lambda * L_CL"""
        ce = ObjectiveService.cross_entropy(ObjectiveService.softmax_probs(logits), labels)
        cl = ObjectiveService.center_loss(features, labels, state)
        return ce + state.weight * cl, ce, cl

    @staticmethod
    def update_centers(state: CenterState, batch_means: ClassMeans) -> CenterState:
        centers = state.centers.copy()
        for k, mean in batch_means.items():
            centers[k - 1] = (1.0 - state.beta) * centers[k - 1] + state.beta * mean
        if not np.isfinite(centers).all():
            raise ConvergenceError("Non-finite class centers after the moving-average update; lower the learning rate")
        return CenterState(centers, state.subset, state.beta, state.weight)

    @staticmethod
    def init_centers(
        model,
        init_sample,
        subset: Optional[Sequence[int]] = None,
        beta: float = 0.5,
        weight: float = 1.0,
    ) -> CenterState:
        """Centers a_k^0 are the class means of the initial model's features over init_sample"""
        from histoad.services.encoder_service import EncoderService

        present = set(int(k) for k in np.unique(init_sample.labels))
        for k in range(1, model.n_classes + 1):
            if k not in present:
                raise ParameterError(f"Center initialization sample has no example of class {k}")
        features, _ = EncoderService.forward(model, init_sample)
        means = ObjectiveService.batch_class_means(features, init_sample.labels)
        centers = np.stack([means[k] for k in range(1, model.n_classes + 1)])
        if subset is None:
            subset = range(1, model.n_classes + 1)
        return CenterState(centers, tuple(subset), beta, weight)

    @staticmethod
    def resolve_subset(mode: str, target_label: Optional[int], n_classes: int) -> Tuple[int, ...]:
        """Compactness subset K for a center mode; labels are 1-based auxiliary-task labels"""
        if mode not in CENTER_MODES:
            raise ParameterError(f"Unknown center mode '{mode}', expected one of {CENTER_MODES}")
        if mode == "target-only":
            if target_label is None:
                raise ParameterError("Center mode 'target-only' needs the target class in the auxiliary task")
            return (target_label,)
        # exclude-target drops the target from the task itself, so K covers what is left
        return tuple(range(1, n_classes + 1))

    @staticmethod
    def _check_dims(features: np.ndarray, labels: np.ndarray, state: CenterState) -> None:
        if features.ndim != 2 or features.shape[1] != state.dim:
            raise ShapeError(f"Features {features.shape} do not match center dimension {state.dim}")
        if len(labels) != features.shape[0]:
            raise ShapeError(f"{len(labels)} labels for {features.shape[0]} feature vectors")
