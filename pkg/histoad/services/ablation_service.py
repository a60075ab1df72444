import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from histoad.errors import ParameterError
from histoad.models.encoder import EncoderArtifact
from histoad.models.metrics import LabeledScores
from histoad.models.one_class import OneClassModel
from histoad.models.run_config import ABLATION_VARIANTS, RANDOM_ENCODER_VARIANT, AblationConfig, RunConfig
from histoad.repositories.corpus_repository import CorpusRepository
from histoad.services.eval_service import EvalService
from histoad.services.pipeline_service import PipelineService
from histoad.services.training_service import TrainingService

METRICS = ("clean_balanced_accuracy", "clean_auroc", "shifted_balanced_accuracy", "shifted_auroc")
TEST_SPLITS = {"clean": ("test-normal", "test-anomalous"), "shifted": ("test-normal-shifted", "test-anomalous-shifted")}


class AblationService:
    """Variants of the auxiliary-training recipe, each trained and evaluated over several seeds"""

    @staticmethod
    def variant_config(base: RunConfig, variant: str, seed: int, repository: CorpusRepository) -> RunConfig:
        config = base.with_overrides(seed=seed)
        if variant in ("full", RANDOM_ENCODER_VARIANT):
            return config
        if variant == "no-mixup":
            return config.with_overrides(mixup=False)
        if variant == "hue-sat":
            return config.with_overrides(mixup=False, hue_sat_only=True)
        if variant == "no-center-loss":
            return config.with_overrides(center_weight=0.0)
        if variant == "center-loss-all":
            return config.with_overrides(center_mode="all-classes")
        if variant == "target-excluded":
            return config.with_overrides(center_mode="exclude-target")
        if variant == "reduced-classes":
            # only the target's own stain group
            groups = repository.stain_groups()
            if config.target_class not in groups:
                raise ParameterError(f"Target class {config.target_class} is not in the corpus")
            members = sorted(k for k, g in groups.items() if g == groups[config.target_class])
            return config.with_overrides(aux_classes=members)
        if variant == "reduced-per-group":
            # every stain group loses its highest-numbered non-target class
            return config.with_overrides(aux_classes=AblationService.drop_one_per_group(config, repository))
        raise ParameterError(f"Unknown ablation variant '{variant}'")

    @staticmethod
    def drop_one_per_group(config: RunConfig, repository: CorpusRepository) -> List[int]:
        groups = repository.stain_groups()
        if config.target_class not in groups:
            raise ParameterError(f"Target class {config.target_class} is not in the corpus")
        kept = []
        for group in sorted(set(groups.values())):
            members = sorted(k for k, g in groups.items() if g == group)
            droppable = [k for k in members if k != config.target_class]
            if len(members) > 1 and droppable:
                members.remove(droppable[-1])
            kept += members
        return sorted(kept)

    @staticmethod
    def evaluate(
        encoder: EncoderArtifact, ocsvm: OneClassModel, repository: CorpusRepository, config: RunConfig
    ) -> Dict[str, float]:
        """Balanced accuracy and AUROC on the clean and batch-shifted target-class test tiles"""
        results = {}
        for name, splits in TEST_SPLITS.items():
            tables = [
                PipelineService.score_split(encoder, ocsvm, repository, split, [config.target_class], config.threshold)
                for split in splits
            ]
            table = pd.concat(tables, ignore_index=True)
            data = LabeledScores(table["score"].to_numpy(), table["anomaly"].to_numpy())
            results[f"{name}_balanced_accuracy"] = EvalService.balanced_accuracy(data, config.threshold)
            results[f"{name}_auroc"] = EvalService.auroc(data)
        return results

    @staticmethod
    def run_variant(variant: str, config: RunConfig, repository: CorpusRepository) -> Dict[str, float]:
        if variant == RANDOM_ENCODER_VARIANT:
            encoder = TrainingService.random_encoder(config, repository)
        else:
            encoder = TrainingService.train_encoder(config, repository).artifact
        ocsvm, _ = TrainingService.train_one_class(config, encoder, repository)
        return AblationService.evaluate(encoder, ocsvm, repository, config)

    @staticmethod
    def run_matrix(
        ablation: AblationConfig,
        repository: CorpusRepository,
        on_result: Optional[Callable[[Dict], None]] = None,
    ) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """Per-seed results and the variant x metric summary (mean and standard error over seeds)"""
        variants = list(ablation.variants)
        unknown = set(variants) - set(ABLATION_VARIANTS)
        if unknown:
            raise ParameterError(f"Unknown ablation variants {sorted(unknown)}")
        if ablation.include_random_encoder:
            variants.append(RANDOM_ENCODER_VARIANT)

        rows: List[Dict] = []
        for variant in variants:
            for seed in ablation.seeds:
                row = {"variant": variant, "seed": seed, "error": ""}
                try:
                    config = AblationService.variant_config(ablation.base, variant, seed, repository)
                    row.update(AblationService.run_variant(variant, config, repository))
                except Exception as e:
                    logging.warning(f"Ablation variant {variant} (seed {seed}) failed: {e}")
                    row.update({metric: np.nan for metric in METRICS}, error=str(e))
                else:
                    logging.info(
                        f"Ablation {variant} seed {seed}: shifted balanced accuracy "
                        f"{row['shifted_balanced_accuracy']:.4f}"
                    )
                rows.append(row)
                if on_result is not None:
                    on_result(row)

        per_seed = pd.DataFrame(rows, columns=["variant", "seed", *METRICS, "error"])
        return per_seed, AblationService.summarize(per_seed, variants)

    @staticmethod
    def summarize(per_seed: pd.DataFrame, variants: List[str]) -> pd.DataFrame:
        summary = []
        for variant in variants:
            done = per_seed[(per_seed["variant"] == variant) & (per_seed["error"] == "")]
            row = {"variant": variant, "n_seeds": len(done)}
            for metric in METRICS:
                values = done[metric].tolist()
                if len(values) >= 2:
                    stats = EvalService.seed_summary(values)
                    row[f"{metric}_mean"], row[f"{metric}_se"] = stats.mean, stats.std_error
                else:
                    row[f"{metric}_mean"] = values[0] if values else np.nan
                    row[f"{metric}_se"] = np.nan
            summary.append(row)
        return pd.DataFrame(summary)
