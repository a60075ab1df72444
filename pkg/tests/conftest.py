import numpy as np
import pytest

from histoad.models.run_config import CorpusConfig, RunConfig
from histoad.services.batch_processor import batch_processor
from histoad.services.synth_service import SynthService

TINY_CORPUS = CorpusConfig(
    n_classes=4,
    n_groups=2,
    tiles_per_class=16,
    target_tiles=24,
    test_tiles=8,
    tile_side=32,
    coverage=0.3,
    seed=7,
)


@pytest.fixture(autouse=True)
def single_worker():
    batch_processor.configure(1)
    yield
    batch_processor.configure(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_corpus_config():
    return TINY_CORPUS


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    SynthService.gen_corpus(TINY_CORPUS, root)
    return root


@pytest.fixture
def quick_config(corpus_dir, tmp_path):
    return RunConfig(
        seed=3,
        corpus_dir=str(corpus_dir),
        output_dir=str(tmp_path / "run"),
        feature_dim=8,
        epochs=2,
        batch_size=16,
        learning_rate=1e-2,
        histogram_budget=10,
        tile_side=32,
        nu=0.2,
        workers=1,
    )
