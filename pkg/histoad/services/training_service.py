import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from histoad.errors import DataError, ParameterError
from histoad.models.centers import CenterState
from histoad.models.color import JitterRanges, StainGroups, TransferTables
from histoad.models.encoder import Batch, EncoderArtifact, EncoderModel, SgdState
from histoad.models.one_class import OneClassModel
from histoad.models.run_config import RunConfig
from histoad.repositories.corpus_repository import CorpusRepository
from histoad.services.batch_processor import batch_processor
from histoad.services.encoder_service import EncoderService
from histoad.services.objective_service import ObjectiveService
from histoad.services.one_class_service import OneClassService
from histoad.services.pipeline_service import PipelineService
from histoad.services.stain_mix_service import StainMixService

TRAIN_LOG_COLUMNS = ["epoch", "ce_loss", "center_loss", "total_loss", "val_accuracy"]
CENTER_INIT_PER_CLASS = 32


@dataclass
class AuxiliaryData:
    """Training and validation tiles of the auxiliary task, relabelled 1..n"""

    class_ids: List[int]
    train_pixels: np.ndarray
    train_labels: np.ndarray
    val_pixels: np.ndarray
    val_labels: np.ndarray
    groups: StainGroups
    target_label: Optional[int] = None

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)


@dataclass
class EncoderTraining:
    artifact: EncoderArtifact
    log: List[Dict[str, float]] = field(default_factory=list)
    tables: TransferTables = field(default_factory=dict)


class TrainingService:
    """Auxiliary-task encoder training and the one-class fit on top of it"""

    @staticmethod
    def aux_class_ids(config: RunConfig, available: List[int]) -> List[int]:
        class_ids = sorted(config.aux_classes) if config.aux_classes else sorted(available)
        missing = set(class_ids) - set(available)
        if missing:
            raise DataError(f"Auxiliary classes {sorted(missing)} are not in the corpus")
        if config.center_mode == "exclude-target":
            class_ids = [k for k in class_ids if k != config.target_class]
        if len(class_ids) < 2:
            raise ParameterError(f"The auxiliary task needs at least 2 classes, got {class_ids}")
        return class_ids

    @staticmethod
    def load_auxiliary(config: RunConfig, repository: CorpusRepository) -> AuxiliaryData:
        assignments = repository.stain_groups()
        class_ids = TrainingService.aux_class_ids(config, sorted(assignments))
        rows = repository.split_rows("train-aux", class_ids)
        pixels = repository.load_pixels(rows)
        labels = np.array([class_ids.index(int(k)) + 1 for k in rows["class"]])

        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
        is_val = np.zeros(len(labels), dtype=bool)
        for label in range(1, len(class_ids) + 1):
            members = np.flatnonzero(labels == label)
            n_val = int(round(config.validation_fraction * len(members)))
            if n_val and n_val < len(members):
                is_val[rng.choice(members, size=n_val, replace=False)] = True

        target_label = class_ids.index(config.target_class) + 1 if config.target_class in class_ids else None
        groups = StainGroups.from_assignments(assignments).restricted(class_ids)
        logging.info(
            f"Auxiliary task: {len(class_ids)} classes, {int((~is_val).sum())} training / {int(is_val.sum())} "
            f"validation tiles"
        )
        return AuxiliaryData(
            class_ids,
            pixels[~is_val],
            labels[~is_val],
            pixels[is_val],
            labels[is_val],
            groups,
            target_label,
        )

    @staticmethod
    def augment(
        tile: np.ndarray,
        class_id: int,
        tables: Optional[TransferTables],
        groups: StainGroups,
        jitter: JitterRanges,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Class mix-up (when tables are given) followed by photometric jitter"""
        if tables is not None:
            tile, _ = StainMixService.apply_mixup(tile, class_id, tables, groups, rng)
        return StainMixService.color_jitter(tile, jitter, rng)

    @staticmethod
    def train_encoder(
        config: RunConfig, repository: CorpusRepository, on_epoch=None
    ) -> EncoderTraining:
        """SGD with momentum on L_CE + lambda * L_CL; keeps the epoch with the best validation accuracy"""
        batch_processor.configure(config.workers)
        data = TrainingService.load_auxiliary(config, repository)
        streams = np.random.SeedSequence(config.seed).spawn(3)
        order_rng = np.random.default_rng(streams[0])
        augment_rng = np.random.default_rng(streams[1])

        means = PipelineService.channel_means(batch_processor.chunks(data.train_pixels, 256))
        tables = None
        if config.mixup:
            per_class = {
                k: data.train_pixels[data.train_labels == label] for label, k in enumerate(data.class_ids, start=1)
            }
            histograms = StainMixService.build_class_histograms(
                per_class, config.histogram_budget, int(streams[2].generate_state(1)[0])
            )
            tables = StainMixService.build_transfer_tables(histograms, data.groups)

        model = EncoderService.init_model(config.seed, config.feature_dim, data.n_classes)
        subset = ObjectiveService.resolve_subset(config.center_mode, data.target_label, data.n_classes)
        centers = ObjectiveService.init_centers(
            model,
            TrainingService._center_init_batch(data, means),
            subset,
            config.center_rate,
            config.center_weight,
        )
        sgd = SgdState.for_model(model, config.learning_rate, config.momentum)
        jitter = config.aux_jitter()

        best: Optional[Tuple[float, int, EncoderModel, CenterState]] = None
        log: List[Dict[str, float]] = []
        n_train = len(data.train_labels)
        for epoch in range(1, config.epochs + 1):
            ce_sum = cl_sum = 0.0
            n_batches = 0
            for index in np.array_split(order_rng.permutation(n_train), max(1, -(-n_train // config.batch_size))):
                tiles = np.stack(
                    [
                        TrainingService.augment(
                            data.train_pixels[i],
                            data.class_ids[data.train_labels[i] - 1],
                            tables,
                            data.groups,
                            jitter,
                            augment_rng,
                        )
                        for i in index
                    ]
                )
                batch = Batch(EncoderService.normalize(tiles, means), data.train_labels[index])
                ce, cl, grads = EncoderService.loss_terms_and_gradients(model, batch, centers)
                model = EncoderService.sgd_step(model, grads, sgd)
                features, _ = EncoderService.forward(model, batch)
                centers = ObjectiveService.update_centers(
                    centers, ObjectiveService.batch_class_means(features, batch.labels)
                )
                ce_sum += ce
                cl_sum += centers.weight * cl
                n_batches += 1

            val_accuracy = TrainingService._accuracy(model, data, means)
            row = {
                "epoch": epoch,
                "ce_loss": ce_sum / n_batches,
                "center_loss": cl_sum / n_batches,
                "total_loss": (ce_sum + cl_sum) / n_batches,
                "val_accuracy": val_accuracy,
            }
            log.append(row)
            if on_epoch is not None:
                on_epoch(row)
            logging.info(
                f"Epoch {epoch}/{config.epochs}: CE {row['ce_loss']:.4f}, center {row['center_loss']:.4f}, "
                f"validation accuracy {val_accuracy:.4f}"
            )
            # without a validation split the latest epoch wins
            if best is None or val_accuracy > best[0] or len(data.val_labels) == 0:
                best = (val_accuracy, epoch, model.copy(), centers)

        val_accuracy, epoch, model, centers = best
        logging.info(f"Keeping epoch {epoch} (validation accuracy {val_accuracy:.4f})")
        artifact = EncoderArtifact(
            model=model,
            centers=centers,
            channel_means=means,
            class_ids=list(data.class_ids),
            target_class=config.target_class,
            epoch=epoch,
            val_accuracy=val_accuracy,
            meta={"center_mode": config.center_mode, "mixup": str(config.mixup).lower(), "seed": str(config.seed)},
        )
        return EncoderTraining(artifact, log, tables or {})

    @staticmethod
    def random_encoder(config: RunConfig, repository: CorpusRepository) -> EncoderArtifact:
        """Untrained encoder with the same architecture, for the learned-vs-raw comparison"""
        data = TrainingService.load_auxiliary(config, repository)
        means = PipelineService.channel_means(batch_processor.chunks(data.train_pixels, 256))
        model = EncoderService.init_model(config.seed, config.feature_dim, data.n_classes)
        centers = CenterState(np.zeros((data.n_classes, config.feature_dim)), tuple(range(1, data.n_classes + 1)))
        return EncoderArtifact(
            model, centers, means, list(data.class_ids), config.target_class, meta={"untrained": "true"}
        )

    @staticmethod
    def train_one_class(
        config: RunConfig, encoder: EncoderArtifact, repository: CorpusRepository
    ) -> Tuple[OneClassModel, float]:
        """Fit the one-class SVM on jittered target-class tiles; returns the model and its training outlier fraction"""
        batch_processor.configure(config.workers)
        rows = repository.split_rows("train-target", [config.target_class])
        pixels = repository.load_pixels(rows)
        jitter = config.svm_jitter()
        if not jitter.is_empty():
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
            pixels = np.stack([StainMixService.color_jitter(tile, jitter, rng) for tile in pixels])

        features = EncoderService.encode_tiles(encoder.model, pixels, encoder.channel_means)
        model = OneClassService.fit(features, config.nu, config.gamma, standardize=config.standardize)
        outliers = PipelineService.wsi_fraction(OneClassService.decision_batch(model, features), 0.0)
        logging.info(
            f"One-class model on {len(features)} target tiles: training outlier fraction {outliers:.3f} "
            f"(nu={config.nu}), support vector fraction {len(model.coefficients) / len(features):.3f}"
        )
        return model, outliers

    @staticmethod
    def _center_init_batch(data: AuxiliaryData, means: np.ndarray) -> Batch:
        picks = np.concatenate(
            [np.flatnonzero(data.train_labels == label)[:CENTER_INIT_PER_CLASS] for label in range(1, data.n_classes + 1)]
        )
        return Batch(EncoderService.normalize(data.train_pixels[picks], means), data.train_labels[picks])

    @staticmethod
    def _accuracy(model: EncoderModel, data: AuxiliaryData, means: np.ndarray) -> float:
        if len(data.val_labels) == 0:
            return 0.0
        predicted = EncoderService.predict_classes(model, data.val_pixels, means)
        return float((predicted == data.val_labels).mean())
