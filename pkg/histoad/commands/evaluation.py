import logging
from pathlib import Path

import click
import pandas as pd

from histoad.commands.common import (
    collect_values,
    config_option,
    echo_config,
    load_with,
    set_option,
)
from histoad.errors import DataError
from histoad.models.metrics import LabeledScores
from histoad.repositories.corpus_repository import CorpusRepository
from histoad.repositories.report_repository import ReportRepository
from histoad.schemas.report_schemas import AblationRowSchema, MetricsReportSchema, SeedSummarySchema
from histoad.schemas.run_schemas import AblationConfigSchema, RunConfigSchema
from histoad.services.ablation_service import AblationService
from histoad.services.eval_service import EvalService

REPORT_METRICS = ("balanced_accuracy", "f1", "auroc", "sensitivity", "specificity")


def read_labeled_scores(path: Path) -> LabeledScores:
    table = ReportRepository.read_csv(path)
    missing = {"score", "anomaly"} - set(table.columns)
    if missing:
        raise DataError(f"Score table {path} lacks columns {sorted(missing)}")
    return LabeledScores(table["score"].to_numpy(), table["anomaly"].astype(bool).to_numpy())


@click.command("eval")
@click.option(
    "--scores",
    "score_paths",
    multiple=True,
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Labeled score table (columns score, anomaly); one per seed.",
)
@click.option("--threshold", type=float, default=0.0, show_default=True)
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
def evaluate(score_paths, threshold, output_dir):
    """Balanced accuracy, F1, AUROC, ROC and Mann-Whitney for score tables."""
    reports = ReportRepository(output_dir)
    echo_config(output_dir, {"threshold": threshold, "scores": ",".join(score_paths)})
    rows, records = [], []
    for index, path in enumerate(map(Path, score_paths)):
        data = read_labeled_scores(path)
        report = EvalService.metrics_report(data, threshold)
        record = MetricsReportSchema().dump(report)
        record["table"] = str(path)
        records.append(record)
        rows.append(
            {
                "table": str(path),
                **{metric: getattr(report, metric) for metric in REPORT_METRICS},
                "f1_degenerate": report.f1_degenerate,
                "tp": report.confusion.tp,
                "fp": report.confusion.fp,
                "tn": report.confusion.tn,
                "fn": report.confusion.fn,
                "mann_whitney_u": report.mann_whitney.u,
                "mann_whitney_p": report.mann_whitney.p_value,
            }
        )
        roc = pd.DataFrame(EvalService.roc_points(data), columns=["fpr", "tpr"])
        reports.write_table(f"roc_{index}.csv", roc)
        logging.info(
            f"{path}: balanced accuracy {report.balanced_accuracy:.4f}, AUROC {report.auroc:.4f}, "
            f"Mann-Whitney p {report.mann_whitney.p_value:.3g}"
        )

    metrics = pd.DataFrame(rows)
    reports.write_table("metrics.csv", metrics)
    result = {"tables": records}
    if len(rows) >= 2:
        summaries = []
        for metric in REPORT_METRICS:
            summary = EvalService.seed_summary(metrics[metric].tolist())
            summaries.append(SeedSummarySchema().dump(dict(vars(summary), metric=metric, n_seeds=summary.n_seeds)))
        reports.write_table(
            "metrics_summary.csv",
            pd.DataFrame(
                [{"metric": s["metric"], "mean": s["mean"], "se": s["std_error"], "n_seeds": s["n_seeds"]} for s in summaries]
            ),
        )
        result["summary"] = summaries
    reports.write_record("metrics.json", result)


@click.command("ablate")
@config_option
@set_option
@click.option("--corpus-dir")
@click.option("--output-dir")
@click.option("--seeds", help="Comma-separated seeds.")
@click.option("--variants", help="Comma-separated variant names.")
@click.option("--random-encoder/--no-random-encoder", "include_random_encoder", default=None)
@click.option("--epochs", type=int)
@click.option("--workers", type=int)
def ablate(config_path, assignments, seeds, variants, include_random_encoder, **flags):
    """Run the ablation matrix and report mean and standard error per variant."""
    values = collect_values(
        config_path,
        assignments,
        dict(flags, seeds=seeds, variants=variants, include_random_encoder=include_random_encoder),
    )
    ablation = load_with(AblationConfigSchema(), values)
    ablation.base = load_with(RunConfigSchema(), values)
    out_dir = Path(ablation.base.output_dir)
    reports = ReportRepository(out_dir)
    echo_config(out_dir, RunConfigSchema().dump(ablation.base), AblationConfigSchema().dump(ablation))

    per_seed, summary = AblationService.run_matrix(ablation, CorpusRepository(ablation.base.corpus_dir))
    reports.write_table("ablation_seeds.csv", per_seed)
    reports.write_table("ablation.csv", summary)
    reports.write_record(
        "ablation.json", {"rows": AblationRowSchema(many=True).dump(summary.to_dict(orient="records"))}
    )
    failures = per_seed[per_seed["error"] != ""]
    if len(failures):
        logging.warning(f"{len(failures)} of {len(per_seed)} ablation runs failed; see ablation_seeds.csv")
