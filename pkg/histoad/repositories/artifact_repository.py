import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from histoad.errors import DataError
from histoad.models.centers import CenterState
from histoad.models.color import ColorTransferTable, TransferTables
from histoad.models.encoder import EncoderArtifact, EncoderModel
from histoad.models.one_class import OneClassModel, StandardizerStats

MAGIC = b"HSAD"
VERSION = 1
KINDS = {"encoder": 1, "one-class": 2, "transfer-tables": 3}
PREAMBLE = struct.Struct("<4sHBI")

Arrays = List[Tuple[str, np.ndarray]]


class ArtifactRepository:
    """Binary model container: magic, version, kind, JSON header, then little-endian arrays"""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def save_encoder(self, name: str, artifact: EncoderArtifact) -> Path:
        model, centers = artifact.model, artifact.centers
        header = {
            "feature_dim": model.feature_dim,
            "n_classes": model.n_classes,
            "n_blocks": len(model.conv_blocks),
            "class_ids": [int(k) for k in artifact.class_ids],
            "target_class": int(artifact.target_class),
            "epoch": int(artifact.epoch),
            "val_accuracy": float(artifact.val_accuracy),
            "center_subset": [int(k) for k in centers.subset],
            "center_rate": float(centers.beta),
            "center_weight": float(centers.weight),
            "meta": dict(artifact.meta),
        }
        arrays = [(f"param{i}", p) for i, p in enumerate(model.parameters())]
        arrays += [("centers", centers.centers), ("channel_means", artifact.channel_means)]
        return self._write(name, "encoder", header, arrays)

    def load_encoder(self, name: str) -> EncoderArtifact:
        header, arrays = self._read(name, "encoder")
        params = [arrays[f"param{i}"] for i in range(2 * (header["n_blocks"] + 2))]
        template = EncoderModel([], None, None, header["feature_dim"], header["n_classes"])
        centers = CenterState(
            arrays["centers"], tuple(header["center_subset"]), header["center_rate"], header["center_weight"]
        )
        return EncoderArtifact(
            model=EncoderModel.from_parameters(template, params),
            centers=centers,
            channel_means=arrays["channel_means"],
            class_ids=header["class_ids"],
            target_class=header["target_class"],
            epoch=header["epoch"],
            val_accuracy=header["val_accuracy"],
            meta=header["meta"],
        )

    def save_one_class(self, name: str, model: OneClassModel) -> Path:
        header = {
            "rho": float(model.rho),
            "gamma": float(model.gamma),
            "nu": float(model.nu),
            "kernel": model.kernel,
            "n_train": int(model.n_train),
            "kkt_residual": float(model.kkt_residual),
        }
        arrays = [
            ("support_vectors", model.support_vectors),
            ("coefficients", model.coefficients),
            ("standardizer_mean", model.standardizer.mean),
            ("standardizer_std", model.standardizer.std),
        ]
        return self._write(name, "one-class", header, arrays)

    def load_one_class(self, name: str) -> OneClassModel:
        header, arrays = self._read(name, "one-class")
        return OneClassModel(
            support_vectors=arrays["support_vectors"],
            coefficients=arrays["coefficients"],
            rho=header["rho"],
            gamma=header["gamma"],
            nu=header["nu"],
            standardizer=StandardizerStats(arrays["standardizer_mean"], arrays["standardizer_std"]),
            kernel=header["kernel"],
            n_train=header["n_train"],
            kkt_residual=header["kkt_residual"],
        )

    def save_tables(self, name: str, tables: TransferTables) -> Path:
        pairs = sorted(tables)
        luts = np.stack([tables[p].lut for p in pairs]) if pairs else np.zeros((0, 3, 256), dtype=np.uint8)
        header = {"pairs": [[int(a), int(b)] for a, b in pairs]}
        return self._write(name, "transfer-tables", header, [("luts", luts.astype(np.uint8))])

    def load_tables(self, name: str) -> TransferTables:
        header, arrays = self._read(name, "transfer-tables")
        return {
            (a, b): ColorTransferTable(a, b, lut) for (a, b), lut in zip(map(tuple, header["pairs"]), arrays["luts"])
        }

    def _write(self, name: str, kind: str, header: Dict[str, Any], arrays: Arrays) -> Path:
        table = []
        payload = []
        for array_name, array in arrays:
            array = np.asarray(array)
            dtype = np.dtype("<f8") if array.dtype.kind == "f" else np.dtype(array.dtype).newbyteorder("<")
            data = np.ascontiguousarray(array, dtype=dtype)
            table.append({"name": array_name, "dtype": dtype.str, "shape": list(data.shape)})
            payload.append(data.tobytes())
        header = dict(header, arrays=table)
        encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "wb") as f:
            f.write(PREAMBLE.pack(MAGIC, VERSION, KINDS[kind], len(encoded)))
            f.write(encoded)
            for chunk in payload:
                f.write(chunk)
        return target

    def _read(self, name: str, kind: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
        source = self.path(name)
        if not source.is_file():
            raise DataError(f"Artifact {source} does not exist")
        blob = source.read_bytes()
        if len(blob) < PREAMBLE.size:
            raise DataError(f"Artifact {source} is truncated")
        magic, version, kind_code, header_len = PREAMBLE.unpack_from(blob)
        if magic != MAGIC:
            raise DataError(f"{source} is not a model artifact")
        if version != VERSION:
            raise DataError(f"Artifact {source} has unsupported version {version}")
        if kind_code != KINDS[kind]:
            raise DataError(f"Artifact {source} does not hold a {kind} model")

        offset = PREAMBLE.size
        try:
            header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DataError(f"Artifact {source} has a corrupt header: {e}") from e
        offset += header_len

        arrays = {}
        for entry in header.pop("arrays"):
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"], dtype=np.int64))
            size = count * dtype.itemsize
            if offset + size > len(blob):
                raise DataError(f"Artifact {source} is truncated in array '{entry['name']}'")
            arrays[entry["name"]] = np.frombuffer(blob, dtype, count, offset).reshape(entry["shape"]).copy()
            offset += size
        return header, arrays
