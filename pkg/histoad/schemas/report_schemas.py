from marshmallow import Schema, fields


class TileScoreSchema(Schema):
    row = fields.Int()
    col = fields.Int()
    score = fields.Float()
    is_anomalous = fields.Bool()


class SlideReportSchema(Schema):
    slide_id = fields.Str()
    n_tiles = fields.Int()
    anomaly_fraction = fields.Float()
    logistic_score = fields.Float()
    threshold = fields.Float()
    growth = fields.Float()
    tiles = fields.List(fields.Nested(TileScoreSchema))


class ConfusionSchema(Schema):
    tp = fields.Int()
    fp = fields.Int()
    tn = fields.Int()
    fn = fields.Int()


class MannWhitneySchema(Schema):
    u = fields.Float()
    p_value = fields.Float()
    exact = fields.Bool()


class MetricsReportSchema(Schema):
    n_positive = fields.Int()
    n_negative = fields.Int()
    threshold = fields.Float()
    balanced_accuracy = fields.Float()
    sensitivity = fields.Float()
    specificity = fields.Float()
    f1 = fields.Float()
    f1_degenerate = fields.Bool()
    auroc = fields.Float()
    confusion = fields.Nested(ConfusionSchema)
    mann_whitney = fields.Nested(MannWhitneySchema)


class SeedSummarySchema(Schema):
    metric = fields.Str()
    values = fields.List(fields.Float())
    mean = fields.Float()
    std_error = fields.Float()
    n_seeds = fields.Int()


class AblationRowSchema(Schema):
    variant = fields.Str()
    n_seeds = fields.Int()
    clean_balanced_accuracy_mean = fields.Float(allow_nan=True)
    clean_balanced_accuracy_se = fields.Float(allow_nan=True)
    clean_auroc_mean = fields.Float(allow_nan=True)
    clean_auroc_se = fields.Float(allow_nan=True)
    shifted_balanced_accuracy_mean = fields.Float(allow_nan=True)
    shifted_balanced_accuracy_se = fields.Float(allow_nan=True)
    shifted_auroc_mean = fields.Float(allow_nan=True)
    shifted_auroc_se = fields.Float(allow_nan=True)
