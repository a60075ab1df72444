import logging
from pathlib import Path

import click

from histoad.commands.common import config_option, echo_run_config, load_run_config, set_option
from histoad.models.run_config import CENTER_MODES
from histoad.repositories.artifact_repository import ArtifactRepository
from histoad.repositories.corpus_repository import CorpusRepository
from histoad.repositories.report_repository import ReportRepository
from histoad.services.training_service import TRAIN_LOG_COLUMNS, TrainingService

ENCODER_ARTIFACT = "encoder.hsad"
TABLES_ARTIFACT = "transfer_tables.hsad"
ONE_CLASS_ARTIFACT = "ocsvm.hsad"
TRAIN_LOG = "train_log.csv"


@click.command("train-encoder")
@config_option
@set_option
@click.option("--corpus-dir")
@click.option("--output-dir")
@click.option("--seed", type=int)
@click.option("--target-class", type=int)
@click.option("--epochs", type=int)
@click.option("--feature-dim", type=int)
@click.option("--center-weight", type=float, help="lambda; 0 disables the center loss.")
@click.option("--center-mode", type=click.Choice(CENTER_MODES))
@click.option("--mixup/--no-mixup", default=None)
@click.option("--workers", type=int)
def train_encoder(config_path, assignments, **flags):
    """Train the auxiliary classifier whose features feed the one-class model."""
    config = load_run_config(config_path, assignments, **flags)
    out_dir = Path(config.output_dir)
    reports = ReportRepository(out_dir)
    echo_run_config(out_dir, config)
    reports.start_log(TRAIN_LOG, TRAIN_LOG_COLUMNS)

    training = TrainingService.train_encoder(
        config, CorpusRepository(config.corpus_dir), on_epoch=lambda row: reports.append_log(TRAIN_LOG, row)
    )
    artifacts = ArtifactRepository(out_dir)
    artifacts.save_encoder(ENCODER_ARTIFACT, training.artifact)
    if training.tables:
        artifacts.save_tables(TABLES_ARTIFACT, training.tables)
    logging.info(
        f"Encoder saved to {out_dir / ENCODER_ARTIFACT} (epoch {training.artifact.epoch}, "
        f"validation accuracy {training.artifact.val_accuracy:.4f})"
    )


@click.command("train-ocsvm")
@config_option
@set_option
@click.option("--encoder", "encoder_path", type=click.Path(dir_okay=False), help="Defaults to <output-dir>/encoder.hsad.")
@click.option("--corpus-dir")
@click.option("--output-dir")
@click.option("--seed", type=int)
@click.option("--target-class", type=int)
@click.option("--nu", type=float)
@click.option("--gamma", help="Kernel width or 'auto'.")
@click.option("--svm-augment/--no-svm-augment", default=None)
@click.option("--workers", type=int)
def train_ocsvm(config_path, assignments, encoder_path, **flags):
    """Fit the one-class SVM on encoded target-class tiles."""
    config = load_run_config(config_path, assignments, **flags)
    out_dir = Path(config.output_dir)
    echo_run_config(out_dir, config)

    encoder_path = Path(encoder_path) if encoder_path else out_dir / ENCODER_ARTIFACT
    encoder = ArtifactRepository(encoder_path.parent).load_encoder(encoder_path.name)
    model, outliers = TrainingService.train_one_class(config, encoder, CorpusRepository(config.corpus_dir))
    ArtifactRepository(out_dir).save_one_class(ONE_CLASS_ARTIFACT, model)
    ReportRepository(out_dir).write_record(
        "ocsvm_summary.json",
        {
            "n_train": model.n_train,
            "n_support_vectors": int(len(model.coefficients)),
            "training_outlier_fraction": outliers,
            "nu": model.nu,
            "gamma": model.gamma,
            "rho": model.rho,
            "kkt_residual": model.kkt_residual,
        },
    )
    if outliers > model.nu + 0.02:
        logging.warning(f"Training outlier fraction {outliers:.3f} exceeds nu={model.nu} by more than 0.02")
    logging.info(f"One-class model saved to {out_dir / ONE_CLASS_ARTIFACT}")
