import numpy as np
import pytest

from histoad.errors import ConvergenceError, ShapeError
from histoad.models.centers import CenterState
from histoad.models.encoder import Batch, EncoderModel, Gradients, Layer, SgdState
from histoad.services.batch_processor import batch_processor
from histoad.services.encoder_service import CONV_WIDTHS, HEAD_INIT_STD, EncoderService

FD_STEP = 1e-3


def narrow_model(seed, d=3, n=3):
    model = EncoderService.init_model(seed, d=d, n=n, widths=(4,))
    # keep every ReLU of the head away from its kink so central differences stay smooth
    model.head_hidden.bias[:] = 0.5
    return model


def random_batch(rng, m=8, side=8, n=3):
    return Batch(rng.normal(0.0, 0.5, (m, side, side, 3)), rng.integers(1, n + 1, size=m))


def filled_gradients(model, value):
    def like(layer):
        return Layer(np.full_like(layer.weights, value), np.full_like(layer.bias, value))

    return Gradients(
        [like(b) for b in model.conv_blocks], like(model.head_hidden), like(model.head_out), np.zeros((1, 1))
    )


def numeric_gradients(model, batch, centers, weight):
    params = [p.copy() for p in model.parameters()]
    numeric = []
    for i, param in enumerate(params):
        grad = np.zeros_like(param)
        for index in np.ndindex(param.shape):
            original = param[index]
            param[index] = original + FD_STEP
            plus, _ = EncoderService.backward(EncoderModel.from_parameters(model, params), batch, centers, weight)
            param[index] = original - FD_STEP
            minus, _ = EncoderService.backward(EncoderModel.from_parameters(model, params), batch, centers, weight)
            param[index] = original
            grad[index] = (plus - minus) / (2 * FD_STEP)
        numeric.append(grad)
    return numeric


@pytest.mark.parametrize("seed,weight", [(0, 0.0), (1, 1.0), (2, 1.0)])
def test_gradients_match_finite_differences(seed, weight):
    rng = np.random.default_rng(seed)
    model = narrow_model(seed)
    batch = random_batch(rng)
    centers = CenterState(rng.normal(0.0, 0.1, (3, 3)), (1, 2, 3), weight=weight)

    _, grads = EncoderService.backward(model, batch, centers)
    for analytic, numeric in zip(grads.parameters(), numeric_gradients(model, batch, centers, weight)):
        scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        assert np.linalg.norm(analytic - numeric) / scale <= 1e-4


def sampled_numeric_gradients(model, batch, centers, weight, rng, per_tensor=6):
    """Central differences at a few random entries of every weight tensor"""
    params = [p.copy() for p in model.parameters()]
    samples = []
    for param in params:
        picks = rng.choice(param.size, size=min(per_tensor, param.size), replace=False)
        entries = []
        for flat in picks:
            index = np.unravel_index(flat, param.shape)
            original = param[index]
            param[index] = original + FD_STEP
            plus, _ = EncoderService.backward(EncoderModel.from_parameters(model, params), batch, centers, weight)
            param[index] = original - FD_STEP
            minus, _ = EncoderService.backward(EncoderModel.from_parameters(model, params), batch, centers, weight)
            param[index] = original
            entries.append((index, (plus - minus) / (2 * FD_STEP)))
        samples.append(entries)
    return samples


@pytest.mark.parametrize("seed", range(20))
def test_full_architecture_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    weight = float(seed % 2)
    model = EncoderService.init_model(seed, d=6, n=4)
    model.head_hidden.bias[:] = 0.5
    assert len(model.conv_blocks) == len(CONV_WIDTHS) + 1
    batch = Batch(rng.normal(0.0, 0.25, (4, 8, 8, 3)), rng.integers(1, 5, size=4))
    centers = CenterState(rng.normal(0.0, 0.1, (4, 6)), (1, 2, 3, 4), weight=weight)

    _, grads = EncoderService.backward(model, batch, centers)
    for analytic, entries in zip(grads.parameters(), sampled_numeric_gradients(model, batch, centers, weight, rng)):
        picked = np.array([analytic[index] for index, _ in entries])
        numeric = np.array([value for _, value in entries])
        scale = max(np.linalg.norm(picked) + np.linalg.norm(numeric), 1e-8)
        assert np.linalg.norm(picked - numeric) / scale <= 1e-4


def test_forward_shapes_and_determinism(rng):
    model = EncoderService.init_model(3, d=5, n=4)
    batch = random_batch(rng, m=6, side=16, n=4)
    features, logits = EncoderService.forward(model, batch)
    assert features.shape == (6, 5)
    assert logits.shape == (6, 4)

    again, _ = EncoderService.forward(EncoderService.init_model(3, d=5, n=4), batch)
    np.testing.assert_array_equal(features, again)


def test_forward_rejects_tiles_not_divisible_by_downsampling(rng):
    model = EncoderService.init_model(0, d=4, n=2)
    with pytest.raises(ShapeError):
        EncoderService.forward(model, random_batch(rng, m=2, side=10, n=2))


def test_head_initialization():
    model = EncoderService.init_model(11, d=32, n=8)
    for layer in (model.head_hidden, model.head_out):
        assert 0.5 * HEAD_INIT_STD**2 <= layer.weights.var() <= 2.0 * HEAD_INIT_STD**2
    for layer in model.layers():
        assert not layer.bias.any()


def test_sgd_step_without_momentum():
    model = EncoderService.init_model(0, d=3, n=2, widths=(4,))
    model = EncoderModel.from_parameters(model, [np.ones_like(p) for p in model.parameters()])
    state = SgdState.for_model(model, learning_rate=0.1, momentum=0.0)
    updated = EncoderService.sgd_step(model, filled_gradients(model, 0.5), state)
    for param in updated.parameters():
        np.testing.assert_allclose(param, 0.95)


def test_sgd_two_steps_with_momentum():
    model = EncoderService.init_model(0, d=3, n=2, widths=(4,))
    model = EncoderModel.from_parameters(model, [np.ones_like(p) for p in model.parameters()])
    state = SgdState.for_model(model, learning_rate=0.1, momentum=0.9)
    grads = filled_gradients(model, 0.5)
    model = EncoderService.sgd_step(model, grads, state)
    model = EncoderService.sgd_step(model, grads, state)
    for param in model.parameters():
        np.testing.assert_allclose(param, 0.855)
    assert state.steps == 2


def test_zero_gradients_leave_model_unchanged():
    model = EncoderService.init_model(5, d=3, n=2, widths=(4,))
    state = SgdState.for_model(model, learning_rate=0.1, momentum=0.9)
    updated = EncoderService.sgd_step(model, filled_gradients(model, 0.0), state)
    for before, after in zip(model.parameters(), updated.parameters()):
        np.testing.assert_array_equal(before, after)


def test_sgd_step_rejects_non_finite_weights():
    model = EncoderService.init_model(5, d=3, n=2, widths=(4,))
    state = SgdState.for_model(model, learning_rate=1.0, momentum=0.0)
    with pytest.raises(ConvergenceError):
        EncoderService.sgd_step(model, filled_gradients(model, np.inf), state)


def test_encode_tiles_matches_forward():
    rng = np.random.default_rng(3)
    model = EncoderService.init_model(2, d=4, n=3)
    pixels = rng.integers(0, 256, size=(10, 16, 16, 3), dtype=np.uint8)
    means = np.array([120.0, 100.0, 130.0])
    encoded = EncoderService.encode_tiles(model, pixels, means, batch_size=3)
    expected, _ = EncoderService.forward(
        model, Batch(EncoderService.normalize(pixels, means), np.ones(10, dtype=int))
    )
    np.testing.assert_allclose(encoded, expected)


def test_encode_tiles_with_its_own_worker_count_keeps_the_shared_pool(rng):
    model = EncoderService.init_model(2, d=4, n=3)
    pixels = rng.integers(0, 256, size=(7, 8, 8, 3), dtype=np.uint8)
    means = np.full(3, 128.0)
    parallel = EncoderService.encode_tiles(model, pixels, means, batch_size=2, workers=3)
    assert batch_processor.workers == 1
    np.testing.assert_array_equal(parallel, EncoderService.encode_tiles(model, pixels, means, batch_size=2))


def test_pooled_features_ignore_where_activations_sit(rng):
    model = EncoderService.init_model(4, d=5, n=2)
    batch = random_batch(rng, m=3, side=16, n=2)
    features, _, cache = EncoderService._forward(model, batch.tiles)
    pre = cache.pre_activations[-1]
    final_map = pre / (1.0 + np.exp(-pre))
    m, h, w, d = final_map.shape
    shuffled = final_map.reshape(m, h * w, d)[:, rng.permutation(h * w)].reshape(m, h, w, d)
    np.testing.assert_allclose(shuffled.mean(axis=(1, 2)), features, rtol=1e-12, atol=1e-15)
