import logging
import shutil
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError

from histoad.errors import ConfigurationError, DataError
from histoad.models.corpus import SPLITS

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["path", "class", "stain_group", "split", "anomaly", "seed"]


class CorpusRepository:
    """Tile corpus on disk: one directory of PNG tiles per split plus a manifest table"""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    def prepare(self, overwrite: bool = False) -> None:
        """Create the split directories; an existing corpus is only replaced with overwrite"""
        occupied = self.manifest_path.exists() or any((self.root / s).exists() for s in SPLITS)
        if occupied and not overwrite:
            raise ConfigurationError(f"{self.root} already holds a corpus; pass --overwrite to replace it")
        if occupied:
            logging.warning(f"Replacing the corpus at {self.root}")
            for split in SPLITS:
                shutil.rmtree(self.root / split, ignore_errors=True)
            self.manifest_path.unlink(missing_ok=True)
        for split in SPLITS:
            (self.root / split).mkdir(parents=True, exist_ok=True)

    def write_tile(self, relative_path: str, pixels: np.ndarray) -> None:
        Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8), "RGB").save(self.root / relative_path, "PNG")

    def read_tile(self, relative_path: str) -> np.ndarray:
        return self.read_raster(self.root / relative_path)

    @staticmethod
    def read_raster(path) -> np.ndarray:
        try:
            with Image.open(path) as image:
                return np.asarray(image.convert("RGB"), dtype=np.uint8)
        except FileNotFoundError as e:
            raise DataError(f"Raster {path} does not exist") from e
        except (UnidentifiedImageError, OSError) as e:
            raise DataError(f"Raster {path} is corrupt or not an image: {e}") from e

    def save_manifest(self, rows: List[Dict]) -> pd.DataFrame:
        manifest = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
        manifest.to_csv(self.manifest_path, index=False)
        return manifest

    def load_manifest(self) -> pd.DataFrame:
        if not self.manifest_path.exists():
            raise DataError(f"No corpus manifest at {self.manifest_path}")
        manifest = pd.read_csv(self.manifest_path)
        missing = set(MANIFEST_COLUMNS) - set(manifest.columns)
        if missing:
            raise DataError(f"Manifest {self.manifest_path} lacks columns {sorted(missing)}")
        manifest["anomaly"] = manifest["anomaly"].astype(bool)
        return manifest

    def split_rows(self, split: str, classes: Optional[Sequence[int]] = None) -> pd.DataFrame:
        manifest = self.load_manifest()
        rows = manifest[manifest["split"] == split]
        if classes is not None:
            rows = rows[rows["class"].isin(list(classes))]
        if rows.empty:
            raise DataError(f"Split '{split}' has no tiles" + (f" for classes {list(classes)}" if classes else ""))
        return rows.reset_index(drop=True)

    def load_pixels(self, rows: pd.DataFrame) -> np.ndarray:
        tiles = [self.read_tile(path) for path in rows["path"]]
        shapes = {t.shape for t in tiles}
        if len(shapes) != 1:
            raise DataError(f"Tiles in {self.root} have mixed shapes {sorted(shapes)}")
        return np.stack(tiles)

    def load_readable(self, rows: pd.DataFrame) -> Tuple[np.ndarray, pd.DataFrame, List[Dict[str, str]]]:
        """Stack every tile that reads cleanly; the others come back as (path, error) records"""
        tiles, kept, errors = [], [], []
        for index, path in zip(rows.index, rows["path"]):
            try:
                pixels = self.read_tile(path)
                if tiles and pixels.shape != tiles[0].shape:
                    raise DataError(f"Tile {path} has shape {pixels.shape}, expected {tiles[0].shape}")
            except DataError as e:
                logging.error(f"Skipping {path}: {e}")
                errors.append({"path": str(path), "error": str(e)})
                continue
            tiles.append(pixels)
            kept.append(index)
        if not tiles:
            raise DataError(f"None of the {len(rows)} tiles under {self.root} could be read")
        return np.stack(tiles), rows.loc[kept].reset_index(drop=True), errors

    def stain_groups(self) -> Dict[int, int]:
        manifest = self.load_manifest()
        pairs = manifest[["class", "stain_group"]].drop_duplicates()
        return {int(c): int(g) for c, g in zip(pairs["class"], pairs["stain_group"])}
