from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from histoad.errors import ConvergenceError, ParameterError, ShapeError
from histoad.models.centers import CenterState
from histoad.models.encoder import Batch, EncoderModel, ForwardCache, Gradients, Layer, SgdState
from histoad.services.batch_processor import batch_processor
from histoad.services.objective_service import ObjectiveService

KERNEL = 3
STRIDE = 2
CONV_WIDTHS = (16, 24)
HIDDEN_UNITS = 64
HEAD_INIT_STD = 1e-2


class EncoderService:
    """Desk-scale convolutional encoder with hand-written forward and backward passes"""

    @staticmethod
    def init_model(seed: int, d: int = 32, n: int = 2, widths: Sequence[int] = CONV_WIDTHS) -> EncoderModel:
        if d < 1:
            raise ParameterError(f"Feature dimension must be >= 1, got {d}")
        if n < 2:
            raise ParameterError(f"Need at least 2 classes, got {n}")

        rng = np.random.default_rng(seed)
        channels = [3, *widths, d]
        blocks = []
        for fan_in_channels, out_channels in zip(channels[:-1], channels[1:]):
            fan_in = fan_in_channels * KERNEL * KERNEL
            weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_channels, fan_in_channels, KERNEL, KERNEL))
            blocks.append(Layer(weights, np.zeros(out_channels)))

        head_hidden = Layer(rng.normal(0.0, HEAD_INIT_STD, (HIDDEN_UNITS, d)), np.zeros(HIDDEN_UNITS))
        head_out = Layer(rng.normal(0.0, HEAD_INIT_STD, (n, HIDDEN_UNITS)), np.zeros(n))
        return EncoderModel(blocks, head_hidden, head_out, feature_dim=d, n_classes=n)

    @staticmethod
    def forward(model: EncoderModel, batch: Batch) -> Tuple[np.ndarray, np.ndarray]:
        features, logits, _ = EncoderService._forward(model, batch.tiles)
        return features, logits

    @staticmethod
    def backward(
        model: EncoderModel, batch: Batch, centers: CenterState, weight: Optional[float] = None
    ) -> Tuple[float, Gradients]:
        """Loss L_CE + lambda * L_CL and its exact gradient with respect to every weight"""
        ce, cl, grads = EncoderService.loss_terms_and_gradients(model, batch, centers, weight)
        lam = centers.weight if weight is None else weight
        return ce + lam * cl, grads

    @staticmethod
    def loss_terms_and_gradients(
        model: EncoderModel, batch: Batch, centers: CenterState, weight: Optional[float] = None
    ) -> Tuple[float, float, Gradients]:
        """(L_CE, L_CL, gradient of L_CE + lambda * L_CL)"""
        batch.check_labels(model.n_classes)
        if centers.dim != model.feature_dim:
            raise ShapeError(f"Center dimension {centers.dim} does not match feature dimension {model.feature_dim}")
        lam = centers.weight if weight is None else weight

        features, logits, cache = EncoderService._forward(model, batch.tiles)
        probs = ObjectiveService.softmax_probs(logits)
        labels = batch.labels
        ce = ObjectiveService.cross_entropy(probs, labels)
        cl = ObjectiveService.center_loss(features, labels, centers)

        dlogits = probs.copy()
        dlogits[np.arange(batch.size), labels - 1] -= 1.0
        head_out = Layer(dlogits.T @ cache.hidden, dlogits.sum(axis=0))

        dhidden = (dlogits @ model.head_out.weights) * (cache.hidden_pre > 0)
        head_hidden = Layer(dhidden.T @ features, dhidden.sum(axis=0))

        dfeatures = dhidden @ model.head_hidden.weights
        if lam:
            dfeatures = dfeatures + lam * ObjectiveService.center_loss_grad(features, labels, centers)

        conv_grads = EncoderService._backward_conv(model, cache, dfeatures)
        return ce, cl, Gradients(conv_grads, head_hidden, head_out, feature_grads=dfeatures)

    @staticmethod
    def sgd_step(model: EncoderModel, grads: Gradients, state: SgdState) -> EncoderModel:
        """velocity <- momentum * velocity + grad; weight <- weight - lr * velocity"""
        updated = []
        for i, (param, grad) in enumerate(zip(model.parameters(), grads.parameters())):
            if param.shape != grad.shape:
                raise ShapeError(f"Gradient shape {grad.shape} does not match weight shape {param.shape}")
            state.velocity[i] = state.momentum * state.velocity[i] + grad
            updated.append(param - state.learning_rate * state.velocity[i])
        state.steps += 1
        new_model = EncoderModel.from_parameters(model, updated)
        if not all(np.isfinite(p).all() for p in new_model.parameters()):
            raise ConvergenceError(f"Non-finite weights after SGD step {state.steps}; lower the learning rate")
        return new_model

    @staticmethod
    def encode_tiles(
        model: EncoderModel,
        pixels: np.ndarray,
        channel_means: np.ndarray,
        batch_size: int = 64,
        workers: Optional[int] = None,
    ) -> np.ndarray:
        """Features for uint8 tiles (N x H x W x 3); chunks run in parallel against the frozen model"""
        if len(pixels) == 0:
            return np.zeros((0, model.feature_dim))

        def encode(chunk: np.ndarray) -> np.ndarray:
            features, _, _ = EncoderService._forward(model, EncoderService.normalize(chunk, channel_means))
            return features

        return np.concatenate(batch_processor.map_chunks(encode, pixels, batch_size, "encode", workers))

    @staticmethod
    def predict_classes(
        model: EncoderModel, pixels: np.ndarray, channel_means: np.ndarray, batch_size: int = 64
    ) -> np.ndarray:
        """1-based predicted labels"""

        def predict(chunk: np.ndarray) -> np.ndarray:
            _, logits, _ = EncoderService._forward(model, EncoderService.normalize(chunk, channel_means))
            return logits.argmax(axis=1) + 1

        return np.concatenate(batch_processor.map_chunks(predict, pixels, batch_size, "predict"))

    @staticmethod
    def normalize(pixels: np.ndarray, channel_means: np.ndarray) -> np.ndarray:
        # zero mean per channel, no variance scaling
        return pixels.astype(np.float64) / 255.0 - np.asarray(channel_means, dtype=np.float64) / 255.0

    @staticmethod
    def _forward(model: EncoderModel, tiles: np.ndarray) -> Tuple[np.ndarray, np.ndarray, ForwardCache]:
        if tiles.ndim != 4 or tiles.shape[-1] != 3:
            raise ShapeError(f"Expected m x H x W x 3 tiles, got {tiles.shape}")
        factor = model.downsampling
        if tiles.shape[1] % factor or tiles.shape[2] % factor:
            raise ShapeError(f"Tile size {tiles.shape[1:3]} is not divisible by the downsampling factor {factor}")

        cache = ForwardCache()
        activation = tiles
        for block in model.conv_blocks:
            if activation.shape[-1] != block.weights.shape[1]:
                raise ShapeError(f"Block expects {block.weights.shape[1]} channels, got {activation.shape[-1]}")
            columns = EncoderService._im2col(activation)
            pre = columns @ block.weights.reshape(block.weights.shape[0], -1).T + block.bias
            cache.inputs.append(activation)
            cache.columns.append(columns)
            cache.pre_activations.append(pre)
            activation = pre * expit(pre)

        features = activation.mean(axis=(1, 2))
        hidden_pre = features @ model.head_hidden.weights.T + model.head_hidden.bias
        hidden = np.maximum(hidden_pre, 0.0)
        logits = hidden @ model.head_out.weights.T + model.head_out.bias
        cache.features, cache.hidden_pre, cache.hidden = features, hidden_pre, hidden
        return features, logits, cache

    @staticmethod
    def _backward_conv(model: EncoderModel, cache: ForwardCache, dfeatures: np.ndarray) -> List[Layer]:
        last = cache.pre_activations[-1]
        spatial = last.shape[1] * last.shape[2]
        dactivation = np.broadcast_to(dfeatures[:, None, None, :] / spatial, last.shape)

        grads: List[Layer] = []
        for i in reversed(range(len(model.conv_blocks))):
            block = model.conv_blocks[i]
            pre = cache.pre_activations[i]
            gate = expit(pre)
            dpre = dactivation * gate * (1.0 + pre * (1.0 - gate))

            out_channels = block.weights.shape[0]
            flat_dpre = dpre.reshape(-1, out_channels)
            columns = cache.columns[i]
            dweights = (flat_dpre.T @ columns.reshape(-1, columns.shape[-1])).reshape(block.weights.shape)
            grads.append(Layer(dweights, flat_dpre.sum(axis=0)))

            if i > 0:
                dcolumns = dpre @ block.weights.reshape(out_channels, -1)
                dactivation = EncoderService._col2im(dcolumns, cache.inputs[i].shape)
        return grads[::-1]

    @staticmethod
    def _im2col(x: np.ndarray) -> np.ndarray:
        """3x3 windows at stride 2 with one pixel of zero padding: (m, H/2, W/2, C*9)"""
        m, h, w, c = x.shape
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        windows = sliding_window_view(padded, (KERNEL, KERNEL), axis=(1, 2))[:, ::STRIDE, ::STRIDE]
        return windows.reshape(m, h // STRIDE, w // STRIDE, c * KERNEL * KERNEL)

    @staticmethod
    def _col2im(dcolumns: np.ndarray, input_shape: Tuple[int, ...]) -> np.ndarray:
        m, h, w, c = input_shape
        out_h, out_w = h // STRIDE, w // STRIDE
        windows = dcolumns.reshape(m, out_h, out_w, c, KERNEL, KERNEL)
        padded = np.zeros((m, h + 2, w + 2, c))
        for kh in range(KERNEL):
            for kw in range(KERNEL):
                padded[:, kh:kh + STRIDE * out_h:STRIDE, kw:kw + STRIDE * out_w:STRIDE, :] += windows[..., kh, kw]
        return padded[:, 1:-1, 1:-1, :]

