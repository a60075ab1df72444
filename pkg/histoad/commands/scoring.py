import logging
from pathlib import Path

import click
import pandas as pd

from histoad.commands.common import config_option, echo_run_config, load_run_config, set_option
from histoad.commands.training import ENCODER_ARTIFACT, ONE_CLASS_ARTIFACT
from histoad.errors import DataError, HistoadError, ParameterError
from histoad.models.corpus import SPLITS
from histoad.repositories.artifact_repository import ArtifactRepository
from histoad.repositories.corpus_repository import CorpusRepository
from histoad.repositories.report_repository import ReportRepository
from histoad.schemas.report_schemas import SlideReportSchema
from histoad.services.pipeline_service import PipelineService

RASTER_SUFFIXES = (".png", ".tif", ".tiff", ".bmp")


def load_artifacts(out_dir: Path, encoder_path, ocsvm_path):
    encoder_path = Path(encoder_path) if encoder_path else out_dir / ENCODER_ARTIFACT
    ocsvm_path = Path(ocsvm_path) if ocsvm_path else out_dir / ONE_CLASS_ARTIFACT
    encoder = ArtifactRepository(encoder_path.parent).load_encoder(encoder_path.name)
    ocsvm = ArtifactRepository(ocsvm_path.parent).load_one_class(ocsvm_path.name)
    return encoder, ocsvm


def raster_paths(inputs):
    paths = []
    for item in map(Path, inputs):
        if item.is_dir():
            paths += sorted(p for p in item.iterdir() if p.suffix.lower() in RASTER_SUFFIXES)
        else:
            paths.append(item)
    return paths


@click.command("score")
@config_option
@set_option
@click.option("--encoder", "encoder_path", type=click.Path(dir_okay=False))
@click.option("--ocsvm", "ocsvm_path", type=click.Path(dir_okay=False))
@click.option("--split", "splits", multiple=True, type=click.Choice(SPLITS), help="Corpus split to score (repeatable).")
@click.option("--raster", "rasters", multiple=True, type=click.Path(), help="Raster file or directory (repeatable).")
@click.option("--corpus-dir")
@click.option("--output-dir")
@click.option("--target-class", type=int)
@click.option("--threshold", type=float)
@click.option("--growth", type=float)
@click.option("--tile-side", type=int)
@click.option("--tile-stride", type=int)
@click.option("--workers", type=int)
def score(config_path, assignments, encoder_path, ocsvm_path, splits, rasters, **flags):
    """Score corpus splits (per-tile table) or rasters (per-slide reports)."""
    if not splits and not rasters:
        raise ParameterError("Give at least one --split or --raster to score")
    config = load_run_config(config_path, assignments, **flags)
    out_dir = Path(config.output_dir)
    reports = ReportRepository(out_dir)
    echo_run_config(out_dir, config)
    encoder, ocsvm = load_artifacts(out_dir, encoder_path, ocsvm_path)

    errors, tables, summary = [], [], []
    if splits:
        repository = CorpusRepository(config.corpus_dir)
        for split in splits:
            try:
                table = PipelineService.score_split(
                    encoder, ocsvm, repository, split, [config.target_class], config.threshold, errors
                )
            except DataError as e:
                logging.error(f"Could not score split {split}: {e}")
                errors.append({"split": split, "path": "", "error": str(e)})
                continue
            table.insert(0, "split", split)
            tables.append(table)
            summary.append(
                {
                    "split": split,
                    "n_tiles": len(table),
                    "anomaly_fraction": PipelineService.wsi_fraction(table["score"], config.threshold),
                    "logistic_score": PipelineService.logistic_aggregate(table["score"], config.growth),
                }
            )
            logging.info(f"Split {split}: anomalous fraction {summary[-1]['anomaly_fraction']:.3f}")
        if tables:
            reports.write_table("scores.csv", pd.concat(tables, ignore_index=True))
            reports.write_table("score_summary.csv", pd.DataFrame(summary))

    slides = []
    if rasters:
        paths = raster_paths(rasters)
        if not paths:
            raise DataError(f"No rasters found in {list(rasters)}")
        flat = []
        for path in paths:
            try:
                image = CorpusRepository.read_raster(path)
                report = PipelineService.score_raster(
                    encoder, ocsvm, image, path.stem, config.tile_side, config.stride, config.threshold, config.growth
                )
            except HistoadError as e:
                logging.error(f"Could not score {path}: {e}")
                errors.append({"split": "", "path": str(path), "error": str(e)})
                continue
            slides.append(SlideReportSchema().dump(report))
            flat += [
                {"slide_id": report.slide_id, "row": t.row, "col": t.col, "score": t.score, "is_anomalous": t.is_anomalous}
                for t in report.tiles
            ]
        reports.write_record("slide_reports.json", {"slides": slides})
        reports.write_table(
            "slide_scores.csv", pd.DataFrame(flat, columns=["slide_id", "row", "col", "score", "is_anomalous"])
        )

    if errors:
        reports.write_table("errors.csv", pd.DataFrame(errors, columns=["split", "path", "error"]))
    if not tables and not slides:
        raise DataError(f"Every input failed to score ({len(errors)} errors, see errors.csv)")
