import pytest
from marshmallow import ValidationError

from histoad.models.run_config import AblationConfig, CorpusConfig, RunConfig
from histoad.schemas.run_schemas import AblationConfigSchema, CorpusConfigSchema, RunConfigSchema


def test_defaults_load_from_empty_input():
    assert RunConfigSchema().load({}) == RunConfig()
    assert CorpusConfigSchema().load({}) == CorpusConfig()


def test_dump_then_load_keeps_the_config():
    config = RunConfig(seed=3, aux_classes=[1, 2, 4], gamma=0.1, svm_hue=(-0.1, 0.1), tile_stride=32)
    dumped = {k: str(v) for k, v in RunConfigSchema().dump(config).items()}
    assert RunConfigSchema().load(dumped) == config


def test_unset_optional_values_survive_the_text_form():
    dumped = {k: str(v) for k, v in RunConfigSchema().dump(RunConfig()).items()}
    assert dumped["gamma"] == "auto"
    assert dumped["tile_stride"] == "none"
    loaded = RunConfigSchema().load(dumped)
    assert loaded.gamma is None and loaded.tile_stride is None and loaded.aux_classes is None


def test_text_values_are_parsed():
    config = RunConfigSchema().load(
        {"epochs": "3", "mixup": "false", "svm_saturation": "0.5, 1.5", "svm_hue": "none", "unknown_key": "x"}
    )
    assert config.epochs == 3
    assert config.mixup is False
    assert config.svm_saturation == (0.5, 1.5)
    assert config.svm_hue is None
    assert config.stride == config.tile_side


def test_empty_value_keeps_the_default():
    assert RunConfigSchema().load({"nu": ""}).nu == RunConfig().nu


@pytest.mark.parametrize(
    "values",
    [
        {"center_mode": "some"},
        {"nu": "0"},
        {"momentum": "1.0"},
        {"svm_brightness": "1.2,0.8"},
        {"svm_hue": "-0.7,0.1"},
        {"aux_brightness": "0.8"},
        {"gamma": "-1"},
    ],
)
def test_invalid_run_values(values):
    with pytest.raises(ValidationError):
        RunConfigSchema().load(values)


def test_corpus_config_lists():
    config = CorpusConfigSchema().load({"lesions": "vacuole,blotch", "shift_offset": "1,2,3", "n_classes": "4"})
    assert config.lesions == ("vacuole", "blotch")
    assert config.shift_offset == (1.0, 2.0, 3.0)
    with pytest.raises(ValidationError):
        CorpusConfigSchema().load({"lesions": "scar"})
    with pytest.raises(ValidationError):
        CorpusConfigSchema().load({"shift_gain": "1,1"})


def test_ablation_config():
    config = AblationConfigSchema().load({"seeds": "1,2", "variants": "full,no-mixup", "include_random_encoder": "true"})
    assert isinstance(config, AblationConfig)
    assert config.seeds == [1, 2]
    assert config.variants == ["full", "no-mixup"]
    assert config.include_random_encoder
    with pytest.raises(ValidationError):
        AblationConfigSchema().load({"variants": "everything"})
