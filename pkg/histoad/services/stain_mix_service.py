import logging
from typing import List, Mapping, Optional, Tuple

import numpy as np
from PIL import Image, ImageEnhance

from histoad.errors import ConfigurationError, ParameterError
from histoad.models.color import (
    ClassHistogram,
    ColorTransferTable,
    JitterRanges,
    StainGroups,
    TransferTables,
)

LEVELS = 256
PSEUDO_COUNT = 1


class StainMixService:
    """Class mix-up color transfer by histogram matching, plus photometric jitter"""

    @staticmethod
    def build_class_histograms(
        corpus: Mapping[int, np.ndarray], sample_budget: int = 200, seed: int = 0
    ) -> List[ClassHistogram]:
        """Per-class, per-channel 256-bin counts over a seeded sample of at most sample_budget tiles"""
        rng = np.random.default_rng(seed)
        histograms = []
        for class_id in sorted(corpus):
            tiles = corpus[class_id]
            if len(tiles) == 0:
                raise ParameterError(f"Class {class_id} has no tiles to build a color histogram from")
            take = min(sample_budget, len(tiles))
            picked = np.sort(rng.choice(len(tiles), size=take, replace=False))
            sample = np.asarray(tiles)[picked]
            counts = np.stack(
                [np.bincount(sample[..., c].ravel(), minlength=LEVELS) for c in range(3)]
            ).astype(np.int64)
            histograms.append(ClassHistogram(class_id, counts))
        logging.info(f"Built color histograms for {len(histograms)} classes (<= {sample_budget} tiles each)")
        return histograms

    @staticmethod
    def cdf(hist: np.ndarray) -> np.ndarray:
        hist = np.asarray(hist, dtype=np.float64)
        total = hist.sum()
        if total <= 0:
            raise ParameterError("Cannot build a CDF from an empty histogram")
        cdf = np.cumsum(hist) / total
        cdf[-1] = 1.0
        return cdf

    @staticmethod
    def build_transfer_lut(cdf_src: np.ndarray, cdf_dst: np.ndarray) -> np.ndarray:
        """lut[x] = smallest z with cdf_dst(z) >= cdf_src(x); empty source levels go to the first occupied z"""
        queries = np.maximum(cdf_src, np.finfo(np.float64).tiny)
        lut = np.searchsorted(cdf_dst, queries, side="left")
        return np.minimum(lut, LEVELS - 1).astype(np.uint8)

    @staticmethod
    def build_transfer_tables(histograms: List[ClassHistogram], groups: StainGroups) -> TransferTables:
        # one pseudo-count per level keeps every CDF strictly increasing, so k -> k is the identity
        cdfs = {
            h.class_id: [StainMixService.cdf(h.counts[c] + PSEUDO_COUNT) for c in range(3)] for h in histograms
        }
        tables: TransferTables = {}
        for source, destination in groups.pairs():
            if source not in cdfs or destination not in cdfs:
                continue
            lut = np.stack(
                [StainMixService.build_transfer_lut(cdfs[source][c], cdfs[destination][c]) for c in range(3)]
            )
            tables[(source, destination)] = ColorTransferTable(source, destination, lut)
        return tables

    @staticmethod
    def apply_mixup(
        tile: np.ndarray,
        src_class: int,
        tables: TransferTables,
        groups: StainGroups,
        rng: np.random.Generator,
    ) -> Tuple[np.ndarray, int]:
        """Map the tile's colors onto a destination class drawn uniformly from its stain group"""
        members = groups.members(src_class)
        destination = int(members[rng.integers(len(members))])
        table = tables.get((src_class, destination))
        if table is None:
            raise ConfigurationError(f"No color transfer table for classes {src_class} -> {destination}")
        return table.apply(tile), destination

    @staticmethod
    def sample_jitter(ranges: JitterRanges, rng: np.random.Generator) -> Tuple[Optional[float], ...]:
        """Draw factors in the fixed order brightness, contrast, saturation, hue"""
        return tuple(
            None if interval is None else float(rng.uniform(*interval))
            for interval in (ranges.brightness, ranges.contrast, ranges.saturation, ranges.hue)
        )

    @staticmethod
    def color_jitter(tile: np.ndarray, ranges: JitterRanges, rng: np.random.Generator) -> np.ndarray:
        if ranges.is_empty():
            return tile
        brightness, contrast, saturation, hue = StainMixService.sample_jitter(ranges, rng)
        return StainMixService.adjust(tile, brightness, contrast, saturation, hue)

    @staticmethod
    def adjust(
        tile: np.ndarray,
        brightness: Optional[float] = None,
        contrast: Optional[float] = None,
        saturation: Optional[float] = None,
        hue: Optional[float] = None,
    ) -> np.ndarray:
        """Brightness multiplies, contrast blends with mean luminance, saturation with grayscale; hue rotates"""
        image = Image.fromarray(np.ascontiguousarray(tile, dtype=np.uint8), "RGB")
        if brightness is not None and brightness != 1.0:
            image = ImageEnhance.Brightness(image).enhance(brightness)
        if contrast is not None and contrast != 1.0:
            image = ImageEnhance.Contrast(image).enhance(contrast)
        if saturation is not None and saturation != 1.0:
            image = ImageEnhance.Color(image).enhance(saturation)
        if hue is not None and hue != 0.0:
            if not -0.5 <= hue <= 0.5:
                raise ParameterError(f"Hue shift must lie in [-0.5, 0.5], got {hue}")
            h, s, v = image.convert("HSV").split()
            shifted = np.array(h, dtype=np.uint8)
            with np.errstate(over="ignore"):
                shifted += np.uint8(round(hue * 255) % 256)
            image = Image.merge("HSV", (Image.fromarray(shifted, "L"), s, v)).convert("RGB")
        return np.asarray(image, dtype=np.uint8)

    @staticmethod
    def mapped_ks_distance(hist_src: np.ndarray, hist_dst: np.ndarray, lut: np.ndarray) -> float:
        """Sup-norm distance between the CDF of lut-mapped source pixels and the destination CDF"""
        mapped = np.bincount(lut.astype(np.int64), weights=np.asarray(hist_src, dtype=np.float64), minlength=LEVELS)
        return float(np.abs(StainMixService.cdf(mapped) - StainMixService.cdf(hist_dst)).max())
