import logging
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from histoad.errors import ConvergenceError, DataError, ParameterError, ShapeError
from histoad.models.one_class import AnomalyScore, OneClassModel, StandardizerStats
from histoad.services.batch_processor import batch_processor

KERNELS = ("rbf", "linear")
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10_000_000
KERNEL_ROW_CHUNK = 256


class OneClassService:
    """nu one-class SVM solved in the dual with two-coordinate (SMO) updates"""

    @staticmethod
    def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
        if gamma <= 0:
            raise ParameterError(f"Kernel width gamma must be > 0, got {gamma}")
        diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
        return float(np.exp(-gamma * np.dot(diff, diff)))

    @staticmethod
    def kernel_matrix(a: np.ndarray, b: np.ndarray, gamma: float, kernel: str = "rbf") -> np.ndarray:
        if kernel == "linear":
            return a @ b.T
        return np.exp(-gamma * cdist(a, b, "sqeuclidean"))

    @staticmethod
    def auto_gamma(features: np.ndarray) -> float:
        """1 / (d * variance of all entries), or 1/d when the features carry no variance"""
        d = features.shape[1]
        variance = float(features.var()) if features.shape[0] >= 2 else 0.0
        if not np.isfinite(variance) or variance <= 0.0:
            return 1.0 / d
        return 1.0 / (d * variance)

    @staticmethod
    def fit(
        features: np.ndarray,
        nu: float = 0.1,
        gamma: Optional[float] = None,
        kernel: str = "rbf",
        standardize: bool = True,
        tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER,
    ) -> OneClassModel:
        """Minimize 1/2 a'Ka subject to 0 <= a_i <= 1/(nu m) and sum(a) = 1"""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ShapeError(f"Expected an m x d feature matrix, got shape {features.shape}")
        m = features.shape[0]
        if m < 1:
            raise ParameterError("Need at least one training vector")
        if not 0.0 < nu <= 1.0:
            raise ParameterError(f"nu must lie in (0, 1], got {nu}")
        if kernel not in KERNELS:
            raise ParameterError(f"Unknown kernel '{kernel}', expected one of {KERNELS}")
        if not np.isfinite(features).all():
            raise DataError("Training features contain non-finite values")

        stats = StandardizerStats.fit(features) if standardize else StandardizerStats.identity(features.shape[1])
        z = stats.apply(features)
        if gamma is None:
            gamma = OneClassService.auto_gamma(z)
        elif gamma <= 0:
            raise ParameterError(f"Kernel width gamma must be > 0, got {gamma}")

        rows = batch_processor.map_chunks(
            lambda chunk: OneClassService.kernel_matrix(chunk, z, gamma, kernel), z, KERNEL_ROW_CHUNK, "kernel-rows"
        )
        K = np.concatenate(rows)
        upper = 1.0 / (nu * m)

        alpha = OneClassService._initial_alpha(m, upper)
        grad = K @ alpha
        iterations, residual = 0, 0.0
        while True:
            can_grow = alpha < upper
            can_shrink = alpha > 0
            if not can_grow.any() or not can_shrink.any():
                # nu = 1 pins every coefficient at the bound
                residual = 0.0
                break
            i = int(np.flatnonzero(can_grow)[np.argmin(grad[can_grow])])
            j = int(np.flatnonzero(can_shrink)[np.argmax(grad[can_shrink])])
            residual = float(grad[j] - grad[i])
            if residual <= tol:
                break
            if iterations >= max_iter:
                raise ConvergenceError(
                    f"One-class solver did not converge in {max_iter} updates (KKT residual {residual:.3g})",
                    residual=residual,
                )
            curvature = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
            delta = min(residual / curvature, upper - alpha[i], alpha[j])
            alpha[i] = upper if delta == upper - alpha[i] else alpha[i] + delta
            alpha[j] = 0.0 if delta == alpha[j] else alpha[j] - delta
            grad += delta * (K[:, i] - K[:, j])
            iterations += 1

        rho = OneClassService._offset(alpha, grad, upper)
        support = alpha > 0
        logging.info(
            f"One-class fit: m={m}, nu={nu}, gamma={gamma:.4g}, {int(support.sum())} support vectors, "
            f"{iterations} updates, KKT residual {residual:.2e}"
        )
        return OneClassModel(
            support_vectors=z[support],
            coefficients=alpha[support],
            rho=rho,
            gamma=float(gamma),
            nu=float(nu),
            standardizer=stats,
            kernel=kernel,
            n_train=m,
            kkt_residual=max(residual, 0.0),
        )

    @staticmethod
    def decision(model: OneClassModel, x: np.ndarray) -> AnomalyScore:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ShapeError(f"Expected a single feature vector, got shape {x.shape}")
        return AnomalyScore(float(OneClassService.decision_batch(model, x[None, :])[0]))

    @staticmethod
    def decision_batch(model: OneClassModel, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != model.dim:
            raise ShapeError(f"Features {features.shape} do not match model dimension {model.dim}")
        if not np.isfinite(features).all():
            raise DataError("Features to score contain non-finite values")
        z = model.standardizer.apply(features)
        K = OneClassService.kernel_matrix(z, model.support_vectors, model.gamma, model.kernel)
        return K @ model.coefficients - model.rho

    @staticmethod
    def _initial_alpha(m: int, upper: float) -> np.ndarray:
        # fill coefficients to the upper bound in order until they sum to one
        alpha = np.zeros(m)
        remaining = 1.0
        for i in range(m):
            alpha[i] = min(upper, remaining)
            remaining -= alpha[i]
            if remaining <= 0.0:
                break
        return alpha

    @staticmethod
    def _offset(alpha: np.ndarray, grad: np.ndarray, upper: float) -> float:
        free = (alpha > 0) & (alpha < upper)
        if free.any():
            return float(np.median(grad[free]))
        at_upper = grad[alpha >= upper]
        at_zero = grad[alpha <= 0]
        low = at_upper.max() if len(at_upper) else at_zero.min()
        high = at_zero.min() if len(at_zero) else at_upper.max()
        return float((low + high) / 2.0)
