from marshmallow import EXCLUDE, Schema, ValidationError, fields, post_load, pre_load, validate

from histoad.models.corpus import LESION_TYPES
from histoad.models.run_config import (
    ABLATION_VARIANTS,
    CENTER_MODES,
    AblationConfig,
    CorpusConfig,
    RunConfig,
)

NONE_WORDS = ("", "none", "auto")


class CommaList(fields.Field):
    """List written as comma-separated text in key=value files"""

    def __init__(self, cast=str, length=None, as_tuple=False, **kwargs):
        super().__init__(**kwargs)
        self.cast = cast
        self.length = length
        self.as_tuple = as_tuple

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return "none"
        return ",".join(str(v) for v in value)

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str):
            if value.strip().lower() in NONE_WORDS:
                if self.allow_none:
                    return None
                raise ValidationError("A value is required.")
            value = [part.strip() for part in value.split(",") if part.strip()]
        try:
            items = [self.cast(v) for v in value]
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Not a valid list: {e}") from e
        if self.length is not None and len(items) != self.length:
            raise ValidationError(f"Expected {self.length} values, got {len(items)}.")
        return tuple(items) if self.as_tuple else items

    def _validate(self, value):
        if value is not None:
            super()._validate(value)


def Interval(**kwargs) -> CommaList:
    return CommaList(cast=float, length=2, as_tuple=True, allow_none=True, **kwargs)


def ordered(interval):
    if interval[0] > interval[1]:
        raise ValidationError(f"Interval lower bound {interval[0]} exceeds upper bound {interval[1]}.")


def hue_range(interval):
    if interval[0] < -0.5 or interval[1] > 0.5:
        raise ValidationError("Hue shifts must lie in [-0.5, 0.5].")


class Unsettable:
    """Number field where empty, 'none' and 'auto' mean unset; unset values skip validation"""

    unset_word = "none"

    def __init__(self, **kwargs):
        super().__init__(allow_none=True, **kwargs)

    def _serialize(self, value, attr, obj, **kwargs):
        return self.unset_word if value is None else super()._serialize(value, attr, obj, **kwargs)

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str) and value.strip().lower() in NONE_WORDS:
            return None
        return super()._deserialize(value, attr, data, **kwargs)

    def _validate(self, value):
        if value is not None:
            super()._validate(value)


class OptionalFloat(Unsettable, fields.Float):
    unset_word = "auto"


class OptionalInt(Unsettable, fields.Integer):
    pass


class RunConfigSchema(Schema):
    seed = fields.Int(validate=validate.Range(min=0))
    corpus_dir = fields.Str()
    output_dir = fields.Str()
    target_class = fields.Int(validate=validate.Range(min=1))
    aux_classes = CommaList(cast=int, allow_none=True)
    feature_dim = fields.Int(validate=validate.Range(min=1))
    epochs = fields.Int(validate=validate.Range(min=1))
    batch_size = fields.Int(validate=validate.Range(min=1))
    learning_rate = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    momentum = fields.Float(validate=validate.Range(min=0, max=1, max_inclusive=False))
    center_weight = fields.Float(validate=validate.Range(min=0))
    center_rate = fields.Float(validate=validate.Range(min=0, max=1))
    center_mode = fields.Str(validate=validate.OneOf(CENTER_MODES))
    mixup = fields.Bool()
    hue_sat_only = fields.Bool()
    aux_brightness = Interval(validate=ordered)
    aux_contrast = Interval(validate=ordered)
    svm_brightness = Interval(validate=ordered)
    svm_contrast = Interval(validate=ordered)
    svm_saturation = Interval(validate=ordered)
    svm_hue = Interval(validate=[ordered, hue_range])
    svm_augment = fields.Bool()
    histogram_budget = fields.Int(validate=validate.Range(min=1))
    validation_fraction = fields.Float(validate=validate.Range(min=0, max=1, max_inclusive=False))
    nu = fields.Float(validate=validate.Range(min=0, max=1, min_inclusive=False))
    gamma = OptionalFloat(validate=validate.Range(min=0, min_inclusive=False))
    standardize = fields.Bool()
    threshold = fields.Float()
    growth = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    tile_side = fields.Int(validate=validate.Range(min=1))
    tile_stride = OptionalInt(validate=validate.Range(min=1))
    workers = fields.Int(validate=validate.Range(min=1))

    class Meta:
        unknown = EXCLUDE

    @pre_load
    def drop_empty(self, data, **kwargs):
        # a bare `key=` in a config file leaves the default in place, except for the optional keys
        optional = {"aux_classes", "gamma", "tile_stride"}
        return {k: v for k, v in data.items() if v is not None and (v != "" or k in optional)}

    @post_load
    def make_config(self, data, **kwargs):
        return RunConfig(**data)


class CorpusConfigSchema(Schema):
    n_classes = fields.Int(validate=validate.Range(min=2))
    n_groups = fields.Int(validate=validate.Range(min=1))
    tiles_per_class = fields.Int(validate=validate.Range(min=1))
    target_tiles = fields.Int(validate=validate.Range(min=1))
    test_tiles = fields.Int(validate=validate.Range(min=1))
    tile_side = fields.Int(validate=validate.Range(min=8))
    coverage = fields.Float(validate=validate.Range(min=0, max=1, min_inclusive=False))
    intensity = fields.Float(validate=validate.Range(min=0, max=1, min_inclusive=False))
    lesions = CommaList(cast=str, as_tuple=True, validate=validate.ContainsOnly(LESION_TYPES))
    shift_offset = CommaList(cast=float, length=3, as_tuple=True)
    shift_gain = CommaList(cast=float, length=3, as_tuple=True)
    seed = fields.Int(validate=validate.Range(min=0))

    class Meta:
        unknown = EXCLUDE

    @pre_load
    def drop_empty(self, data, **kwargs):
        return {k: v for k, v in data.items() if v not in (None, "")}

    @post_load
    def make_config(self, data, **kwargs):
        return CorpusConfig(**data)


class AblationConfigSchema(Schema):
    """Ablation matrix keys; callers load the shared RunConfig base from the same file"""

    seeds = CommaList(cast=int)
    variants = CommaList(cast=str, validate=validate.ContainsOnly(ABLATION_VARIANTS))
    include_random_encoder = fields.Bool()

    class Meta:
        unknown = EXCLUDE

    @pre_load
    def drop_empty(self, data, **kwargs):
        return {k: v for k, v in data.items() if v not in (None, "")}

    @post_load
    def make_config(self, data, **kwargs):
        return AblationConfig(**data)
