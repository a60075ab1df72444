import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from histoad.errors import DataError, ParameterError, ShapeError
from histoad.models.encoder import EncoderArtifact
from histoad.models.one_class import AnomalyScore, OneClassModel
from histoad.models.tiles import ImageTile, ScoredTile, SlideReport, TileExtraction, TileScore
from histoad.repositories.corpus_repository import CorpusRepository
from histoad.services.encoder_service import EncoderService
from histoad.services.one_class_service import OneClassService


class PipelineService:
    """Raster -> tiles -> features -> one-class scores -> slide verdict"""

    @staticmethod
    def extract_tiles(image: np.ndarray, side: int, stride: Optional[int] = None, source_id: str = "") -> TileExtraction:
        """Row-major grid of full tiles; partial edge tiles are dropped"""
        stride = side if stride is None else stride
        if side < 1 or stride < 1:
            raise ParameterError(f"Tile side and stride must be >= 1, got side={side}, stride={stride}")
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeError(f"Expected an H x W x 3 raster, got {image.shape}")
        height, width = image.shape[:2]
        if height < side or width < side:
            logging.warning(f"Raster {source_id or '<unnamed>'} ({height}x{width}) is smaller than one {side}px tile")
            return TileExtraction([], undersized=True)

        tiles = [
            ImageTile(image[top:top + side, left:left + side], source_id, row, col)
            for row, top in enumerate(range(0, height - side + 1, stride))
            for col, left in enumerate(range(0, width - side + 1, stride))
        ]
        return TileExtraction(tiles)

    @staticmethod
    def normalize_tile(tile: ImageTile, channel_means: Sequence[float]) -> np.ndarray:
        return EncoderService.normalize(tile.pixels, np.asarray(channel_means))

    @staticmethod
    def channel_means(chunks: Iterable[np.ndarray]) -> np.ndarray:
        """Per-channel mean on the 0..255 scale, accumulated chunk by chunk"""
        totals = np.zeros(3)
        count = 0
        for chunk in chunks:
            chunk = np.asarray(chunk)
            if chunk.shape[-1] != 3:
                raise ShapeError(f"Expected RGB pixels, got trailing dimension {chunk.shape[-1]}")
            totals += chunk.reshape(-1, 3).sum(axis=0, dtype=np.float64)
            count += chunk.size // 3
        if count == 0:
            raise DataError("Cannot compute channel means over an empty corpus")
        return totals / count

    @staticmethod
    def score_tiles(
        encoder: EncoderArtifact, ocsvm: OneClassModel, tiles: List[ImageTile], batch_size: int = 64
    ) -> List[ScoredTile]:
        if not tiles:
            return []
        if encoder.model.feature_dim != ocsvm.dim:
            raise ShapeError(
                f"Encoder emits {encoder.model.feature_dim}-d features but the one-class model expects {ocsvm.dim}"
            )
        side = tiles[0].pixels.shape
        for tile in tiles:
            if tile.pixels.shape != side or tile.pixels.ndim != 3 or tile.pixels.shape[2] != 3:
                raise ShapeError(f"Tile {tile.tile_id} has shape {tile.pixels.shape}, expected {side}")

        pixels = np.stack([tile.pixels for tile in tiles])
        try:
            features = EncoderService.encode_tiles(encoder.model, pixels, encoder.channel_means, batch_size)
        except ShapeError as e:
            raise ShapeError(f"Tile {tiles[0].tile_id}: {e}") from e
        bad = ~np.isfinite(features).all(axis=1)
        if bad.any():
            raise DataError(f"Tile {tiles[int(np.argmax(bad))].tile_id} produced non-finite features")

        scores = OneClassService.decision_batch(ocsvm, features)
        return [(tile, AnomalyScore(float(s))) for tile, s in zip(tiles, scores)]

    @staticmethod
    def wsi_fraction(scores: Sequence[float], threshold: float = 0.0) -> float:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.size == 0:
            raise ParameterError("Cannot take the anomalous fraction of zero tiles")
        return float((scores < threshold).mean())

    @staticmethod
    def logistic_aggregate(scores: Sequence[float], growth: float = 1.0) -> float:
        """Sum of per-tile anomaly evidence 1 / (1 + exp(growth * score))"""
        if growth <= 0:
            raise ParameterError(f"Growth coefficient must be > 0, got {growth}")
        scores = np.asarray(scores, dtype=np.float64)
        if scores.size == 0:
            raise ParameterError("Cannot aggregate zero tiles")
        return float(expit(-growth * scores).sum())

    @staticmethod
    def build_slide_report(
        slide_id: str, scored: List[ScoredTile], threshold: float = 0.0, growth: float = 1.0
    ) -> SlideReport:
        report = SlideReport(slide_id, threshold=float(threshold), growth=float(growth))
        if not scored:
            return report
        values = [score.score for _, score in scored]
        report.tiles = [
            TileScore(tile.row, tile.col, score.score, score.score < threshold) for tile, score in scored
        ]
        report.anomaly_fraction = PipelineService.wsi_fraction(values, threshold)
        report.logistic_score = PipelineService.logistic_aggregate(values, growth)
        return report

    @staticmethod
    def score_raster(
        encoder: EncoderArtifact,
        ocsvm: OneClassModel,
        image: np.ndarray,
        slide_id: str,
        side: int,
        stride: Optional[int] = None,
        threshold: float = 0.0,
        growth: float = 1.0,
    ) -> SlideReport:
        extraction = PipelineService.extract_tiles(image, side, stride, slide_id)
        scored = PipelineService.score_tiles(encoder, ocsvm, extraction.tiles)
        report = PipelineService.build_slide_report(slide_id, scored, threshold, growth)
        logging.info(
            f"Slide {slide_id}: {report.n_tiles} tiles, anomalous fraction {report.anomaly_fraction:.3f}, "
            f"logistic score {report.logistic_score:.3f}"
        )
        return report

    @staticmethod
    def score_split(
        encoder: EncoderArtifact,
        ocsvm: OneClassModel,
        repository: CorpusRepository,
        split: str,
        classes: Optional[Sequence[int]] = None,
        threshold: float = 0.0,
        errors: Optional[List[Dict[str, str]]] = None,
    ) -> pd.DataFrame:
        """Score table of a corpus split: path, class, anomaly, score, is_anomalous

        Unreadable tiles are left out of the table and appended to `errors`; the split fails only when none load.
        """
        rows = repository.split_rows(split, classes)
        pixels, rows, failed = repository.load_readable(rows)
        if errors is not None:
            errors.extend({"split": split, **failure} for failure in failed)
        features = EncoderService.encode_tiles(encoder.model, pixels, encoder.channel_means)
        scores = OneClassService.decision_batch(ocsvm, features)
        table = rows[["path", "class", "anomaly"]].copy()
        table["score"] = scores
        table["is_anomalous"] = scores < threshold
        return table
