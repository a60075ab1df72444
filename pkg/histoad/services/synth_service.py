import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.ndimage import gaussian_filter
from scipy.stats import rankdata

from histoad.errors import ParameterError
from histoad.models.corpus import (
    SPLITS,
    AnomalySpec,
    ChannelShift,
    ClassSpec,
    Palette,
    SynthTile,
)
from histoad.models.run_config import CorpusConfig
from histoad.models.tiles import ImageTile
from histoad.repositories.corpus_repository import CorpusRepository
from histoad.services.batch_processor import batch_processor

REFERENCE_SIDE = 64

# per stain group: (cytoplasm, background, nuclei); tissue ramps span 160 levels per channel
GROUP_PALETTES = (
    ((75.0, 50.0, 75.0), (235.0, 210.0, 235.0), (70.0, 50.0, 110.0)),
    ((50.0, 75.0, 50.0), (210.0, 235.0, 210.0), (45.0, 65.0, 60.0)),
)
NUCLEI_SPREAD = (35.0, 35.0, 35.0)

# texture per position inside a stain group, all lengths at 64 x 64 px:
# (cells per tile, cell angle, alignment, semi-minor axis, elongation, tissue field grain (rows, cols))
# positions differ in grain and cell shape, both untouched by per-channel histogram matching
CLASS_TEXTURES = (
    (8.0, 0.0, 0.0, 3.0, 1.0, (8.0, 8.0)),
    (14.0, 0.0, 1.0, 1.4, 3.0, (1.5, 12.0)),
    (22.0, np.pi / 2, 1.0, 1.2, 2.8, (12.0, 1.5)),
    (36.0, 0.0, 0.0, 1.5, 1.0, (2.5, 2.5)),
)
CLASS_COLOR_OFFSETS = ((-6.0, 3.0, 0.0), (3.0, -6.0, 6.0), (0.0, 6.0, -3.0), (6.0, 0.0, -6.0))

TILE_OFFSET = 5.0
PIXEL_NOISE = 3.0

VACUOLE_COLOR = np.array([250.0, 248.0, 250.0])
STREAK_TINT = np.array([185.0, 50.0, 70.0])
SPLIT_INDEX = {split: i for i, split in enumerate(SPLITS)}


class SynthService:
    """Deterministic procedural tissue tiles, lesions and staining-batch shifts"""

    @staticmethod
    def default_class_specs(n_classes: int = 8, n_groups: int = 2) -> List[ClassSpec]:
        if n_groups < 1 or n_groups > len(GROUP_PALETTES):
            raise ParameterError(f"Between 1 and {len(GROUP_PALETTES)} stain groups are supported, got {n_groups}")
        if n_classes < n_groups or n_classes > n_groups * len(CLASS_TEXTURES):
            raise ParameterError(
                f"{n_classes} classes cannot be split into {n_groups} groups of at most {len(CLASS_TEXTURES)}"
            )
        specs = []
        per_group = -(-n_classes // n_groups)
        for index in range(n_classes):
            group, position = divmod(index, per_group)
            cytoplasm, background, nuclei = GROUP_PALETTES[group]
            offset = np.array(CLASS_COLOR_OFFSETS[position])
            density, orientation, strength, scale, elongation, grain = CLASS_TEXTURES[position]
            palette = Palette(
                nuclei=tuple(np.add(nuclei, offset)),
                nuclei_spread=NUCLEI_SPREAD,
                cytoplasm=tuple(np.add(cytoplasm, offset)),
                background=tuple(np.add(background, offset)),
            )
            specs.append(
                ClassSpec(index + 1, group + 1, density, orientation, strength, scale, elongation, grain, palette)
            )
        return specs

    @staticmethod
    def target_classes(specs: Sequence[ClassSpec]) -> List[int]:
        """First class of every stain group"""
        targets: Dict[int, int] = {}
        for spec in specs:
            targets.setdefault(spec.stain_group, spec.class_id)
        return [targets[g] for g in sorted(targets)]

    @staticmethod
    def render(spec: ClassSpec, seed: int, side: int = REFERENCE_SIDE) -> SynthTile:
        """Elliptical cells scattered over a smooth tissue field that ramps from cytoplasm to background color"""
        rng = np.random.default_rng(seed)
        palette = spec.palette

        grain = np.array(spec.field_grain) * side / REFERENCE_SIDE
        field = gaussian_filter(rng.normal(size=(side, side)), sigma=tuple(grain), mode="wrap")
        # ranks make the ramp position uniform, so every tile spreads evenly over its color range
        ramp = (rankdata(field.ravel(), method="ordinal") - 0.5) / field.size
        low, high = np.array(palette.cytoplasm), np.array(palette.background)
        image = (low + ramp[:, None] * (high - low)).reshape(side, side, 3)
        image += rng.uniform(-TILE_OFFSET, TILE_OFFSET, size=3)

        area_scale = (side / REFERENCE_SIDE) ** 2
        n_cells = int(rng.poisson(spec.blob_density * area_scale))
        rows, cols = np.mgrid[0:side, 0:side]
        mask = np.zeros((side, side), dtype=bool)
        drawn = 0
        for _ in range(n_cells):
            center = rng.uniform(0, side, size=2)
            angle = spec.orientation + (1.0 - spec.orientation_strength) * rng.uniform(-np.pi / 2, np.pi / 2)
            minor = spec.scale * rng.uniform(0.85, 1.15) * side / REFERENCE_SIDE
            major = minor * spec.elongation
            color = np.array(palette.nuclei) + rng.uniform(-1.0, 1.0, size=3) * np.array(palette.nuclei_spread)
            dy, dx = rows - center[0], cols - center[1]
            along = dx * np.cos(angle) + dy * np.sin(angle)
            across = -dx * np.sin(angle) + dy * np.cos(angle)
            cell = (along / major) ** 2 + (across / minor) ** 2 <= 1.0
            if cell.any():
                image[cell] = color
                mask |= cell
                drawn += 1

        image += rng.normal(0.0, PIXEL_NOISE, size=image.shape)
        pixels = np.clip(np.rint(image), 0, 255).astype(np.uint8)
        return SynthTile(pixels, mask, drawn)

    @staticmethod
    def gen_tile(spec: ClassSpec, seed: int, side: int = REFERENCE_SIDE) -> ImageTile:
        rendered = SynthService.render(spec, seed, side)
        return ImageTile(rendered.pixels, source_id=f"class{spec.class_id}:{seed}", label=spec.class_id)

    @staticmethod
    def inject_anomaly(tile: ImageTile, spec: AnomalySpec, seed: int) -> ImageTile:
        """Overwrite at least coverage * area pixels with a lesion; every lesion pixel differs from the original"""
        rng = np.random.default_rng(seed)
        original = tile.pixels.astype(np.float64)
        side = original.shape[0]
        target = int(np.ceil(spec.coverage * side * side))
        mask = SynthService._lesion_mask(spec.lesion, side, target, rng)

        lesion = original.copy()
        if spec.lesion == "vacuole":
            color = VACUOLE_COLOR
        elif spec.lesion == "streak":
            color = STREAK_TINT
        else:
            gray = original @ np.array([0.299, 0.587, 0.114])
            color = (0.65 * gray + 20.0)[..., None]
        blended = (1.0 - spec.intensity) * original + spec.intensity * color
        lesion[mask] = np.broadcast_to(blended, original.shape)[mask]
        lesion += rng.normal(0.0, 1.5, size=lesion.shape) * mask[..., None]
        out = np.clip(np.rint(lesion), 0, 255).astype(np.uint8)

        unchanged = mask & (out == tile.pixels).all(axis=-1)
        nudged = np.where(tile.pixels[unchanged] < 128, tile.pixels[unchanged] + 12, tile.pixels[unchanged] - 12)
        out[unchanged] = nudged.astype(np.uint8)
        return ImageTile(out, tile.source_id, tile.row, tile.col, tile.label)

    @staticmethod
    def batch_shift(pixels: np.ndarray, shift: ChannelShift) -> np.ndarray:
        """gain * x + offset per channel, rounded and clamped to 0..255"""
        if shift.is_identity:
            return pixels.copy()
        shifted = pixels.astype(np.float64) * np.array(shift.gain) + np.array(shift.offset)
        return np.clip(np.rint(shifted), 0, 255).astype(np.uint8)

    @staticmethod
    def tile_seed(corpus_seed: int, split: str, class_id: int, index: int, stream: int = 0) -> int:
        sequence = np.random.SeedSequence([corpus_seed, SPLIT_INDEX[split], class_id, index, stream])
        return int(sequence.generate_state(1, dtype=np.uint32)[0])

    @staticmethod
    def gen_corpus(
        config: CorpusConfig, out_dir, seed: Optional[int] = None, overwrite: bool = False
    ) -> pd.DataFrame:
        """Write every split as PNG tiles plus manifest.csv; identical (config, seed) gives identical files"""
        seed = config.seed if seed is None else seed
        specs = SynthService.default_class_specs(config.n_classes, config.n_groups)
        if config.n_classes < 2:
            raise ParameterError("A corpus needs at least 2 classes")
        by_id = {spec.class_id: spec for spec in specs}
        targets = SynthService.target_classes(specs)
        shift = ChannelShift(tuple(config.shift_offset), tuple(config.shift_gain))

        repository = CorpusRepository(out_dir)
        repository.prepare(overwrite)

        jobs: List[Tuple[str, int, int]] = []
        for class_id in by_id:
            jobs += [("train-aux", class_id, i) for i in range(config.tiles_per_class)]
        for class_id in targets:
            jobs += [("train-target", class_id, i) for i in range(config.target_tiles)]
            jobs += [("test-normal", class_id, i) for i in range(config.test_tiles)]
            jobs += [("test-anomalous", class_id, i) for i in range(config.test_tiles)]

        def produce(job: Tuple[str, int, int]) -> List[Dict]:
            split, class_id, index = job
            spec = by_id[class_id]
            tile_seed = SynthService.tile_seed(seed, split, class_id, index)
            tile = SynthService.gen_tile(spec, tile_seed, config.tile_side)
            anomaly = split == "test-anomalous"
            if anomaly:
                lesion = AnomalySpec(config.lesions[index % len(config.lesions)], config.intensity, config.coverage)
                tile = SynthService.inject_anomaly(
                    tile, lesion, SynthService.tile_seed(seed, split, class_id, index, stream=1)
                )
            name = f"c{class_id:02d}_{index:05d}.png"
            outputs = [(split, tile.pixels)]
            if split in ("test-normal", "test-anomalous"):
                outputs.append((f"{split}-shifted", SynthService.batch_shift(tile.pixels, shift)))
            rows = []
            for out_split, pixels in outputs:
                path = f"{out_split}/{name}"
                repository.write_tile(path, pixels)
                rows.append(
                    {
                        "path": path,
                        "class": class_id,
                        "stain_group": spec.stain_group,
                        "split": out_split,
                        "anomaly": anomaly,
                        "seed": tile_seed,
                    }
                )
            return rows

        produced = batch_processor.map(produce, jobs, "render")
        rows = [row for job_rows in produced for row in job_rows]
        rows.sort(key=lambda r: (SPLIT_INDEX[r["split"]], r["path"]))
        manifest = repository.save_manifest(rows)
        logging.info(f"Generated {len(manifest)} tiles for {len(specs)} classes under {Path(out_dir)}")
        return manifest

    @staticmethod
    def _lesion_mask(lesion: str, side: int, target: int, rng: np.random.Generator) -> np.ndarray:
        if lesion == "blotch":
            # irregular region: the lowest `target` pixels of a smooth random field
            field = gaussian_filter(rng.normal(size=(side, side)), sigma=side / 10.0)
            mask = np.zeros(side * side, dtype=bool)
            mask[np.argsort(field.ravel(), kind="stable")[:target]] = True
            return mask.reshape(side, side)

        rows, cols = np.mgrid[0:side, 0:side]
        scale = side / REFERENCE_SIDE
        mask = np.zeros((side, side), dtype=bool)
        while mask.sum() < target:
            center = rng.uniform(0, side, size=2)
            if lesion == "vacuole":
                radius = rng.uniform(3.0, 6.0) * scale
                shape = (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= radius**2
            else:
                angle = rng.uniform(0, np.pi)
                half_width = rng.uniform(1.0, 2.0) * scale
                half_length = rng.uniform(0.25, 0.5) * side
                dy, dx = rows - center[0], cols - center[1]
                along = dx * np.cos(angle) + dy * np.sin(angle)
                across = -dx * np.sin(angle) + dy * np.cos(angle)
                shape = (np.abs(across) <= half_width) & (np.abs(along) <= half_length)
            mask |= shape
        return mask
