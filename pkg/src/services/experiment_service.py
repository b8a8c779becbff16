"""Train, evaluate, simulate and analyze runs driven by a RunConfig."""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.adoption import seeding
from src.adoption.checkpoint import load_checkpoint, save_checkpoint
from src.adoption.dataset import (
    AdoptionDataset,
    load_events,
    sample_negatives,
    save_dataset,
    write_event_log,
)
from src.adoption.errors import ShapeMismatchError
from src.adoption.evaluation import activity_trend, cross_validate, decompose_items
from src.adoption.model import ModelState, fit
from src.adoption.synthetic import adoption_rate, generate_synthetic
from src.services.config_schema import HyperParams, RunConfig
from src.services.config_service import RESOLVED_NAME, ConfigService
from src.services.report_service import ReportService

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.txt"
TRUTH_NAME = "truth.txt"


class ExperimentService:
    def __init__(self, config: RunConfig, config_service: ConfigService):
        self.config = config
        self.config_service = config_service
        self.out_dir = Path(config.out_dir)
        self.reports = ReportService(self.out_dir)

    @property
    def threads(self) -> int:
        return self.config.threads or os.cpu_count() or 1

    def _echo_config(self) -> Path:
        path = self.config_service.save_config(
            self.config, self.out_dir / RESOLVED_NAME
        )
        logger.info("resolved configuration written to %s", path)
        return path

    def _input_paths(self) -> Dict[str, Optional[Path]]:
        cfg = self.config
        paths: Dict[str, Optional[Path]] = {}
        for key in ("events", "meta"):
            value = getattr(cfg, key)
            if not value:
                raise ValueError(f"config key '{key}' is required for this command")
            paths[key] = Path(value)
        paths["exposures"] = Path(cfg.exposures) if cfg.exposures else None
        for key, path in paths.items():
            if path is not None and not path.is_file():
                raise FileNotFoundError(f"{key} file not found: {path}")
        return paths

    def load_dataset(self) -> AdoptionDataset:
        paths = self._input_paths()
        return load_events(
            paths["events"],  # type: ignore[arg-type]
            paths["meta"],  # type: ignore[arg-type]
            paths["exposures"],
            post_rate_coeff=self.config.post_rate_coeff,
            visit_rate_coeff=self.config.visit_rate_coeff,
            min_posts=self.config.min_posts,
        )

    def _load_matching_checkpoint(
        self, checkpoint: str | Path, dataset: AdoptionDataset
    ) -> tuple[ModelState, HyperParams]:
        state, hyper = load_checkpoint(checkpoint)
        if (state.n_users, state.n_items) != dataset.shape:
            raise ShapeMismatchError((state.n_users, state.n_items), dataset.shape)
        return state, hyper

    def train(self) -> Dict[str, Any]:
        """Fit the model; writes the checkpoint and the likelihood trace."""
        dataset = self.load_dataset()
        hyper = self.config.hyper_params()
        negatives = sample_negatives(
            dataset,
            self.config.negatives_per_user,
            seeding.stream(self.config.seed, seeding.NEGATIVES),
        )
        result = fit(
            dataset,
            hyper,
            self.config.surfing_params(),
            seed=self.config.seed,
            negatives=negatives,
            threads=self.threads,
        )
        written = [
            save_checkpoint(self.out_dir / CHECKPOINT_NAME, result.state, hyper),
            self.reports.write_trace(result),
            self._echo_config(),
        ]
        return {
            "written": written,
            "trace": result.trace,
            "sweeps": result.sweeps,
            "converged": result.converged,
            "shape": dataset.shape,
        }

    def evaluate(self, checkpoint: Optional[str | Path] = None) -> Dict[str, Any]:
        """Cross-validate the configured models.

        With ``checkpoint`` the learner settings come from its header.
        """
        cfg = self.config
        dataset = self.load_dataset()
        hyper = cfg.hyper_params()
        if checkpoint is not None:
            _, hyper = self._load_matching_checkpoint(checkpoint, dataset)
        reports = cross_validate(
            dataset,
            hyper,
            cfg.surfing_params(),
            cfg.models,
            cfg.recall_at,
            cfg.seed,
            fold_count=cfg.folds,
            negatives_per_user=cfg.negatives_per_user,
            threads=self.threads,
            boundaries=cfg.activity_boundaries,
            bucket_x=cfg.bucket_x,
        )
        summary: Dict[str, Any] = {}
        trends: Dict[str, float] = {}
        for report in reports:
            for X in report.x_values:
                summary[f"{report.model_tag}.recall@{X}"] = report.recall_at[X]
            summary[f"{report.model_tag}.users_evaluated"] = len(report.per_user)
            summary[f"{report.model_tag}.users_skipped"] = report.skipped_users
            if report.activity_buckets:
                trend = activity_trend(report.activity_buckets)
                trends[report.model_tag] = trend
                summary[f"{report.model_tag}.activity_trend"] = trend
        if reports:
            summary["skipped_user_folds"] = reports[0].skipped_pairs
        written: List[Path] = self.reports.write_recall(reports)
        written.append(self.reports.write_summary("summary.txt", summary))
        written.append(self._echo_config())
        return {
            "written": written,
            "reports": reports,
            "trends": trends,
            "hyper": hyper,
        }

    def simulate(self) -> Dict[str, Any]:
        """Sample a synthetic dataset; writes it in both the serialized layout
        and the event-log format, plus the ground-truth factors."""
        cfg = self.config
        params = cfg.synthetic_params()
        dataset, truth = generate_synthetic(
            params, cfg.surfing_params(), cfg.seed, cfg.L_max, cfg.tail_tol
        )
        truth_hyper = HyperParams(
            K=params.K,
            lambda_u=params.lambda_u,
            lambda_theta=params.lambda_theta,
            lambda_eta=params.lambda_eta,
            L_max=cfg.L_max,
            tail_tol=cfg.tail_tol,
        )
        written = save_dataset(dataset, self.out_dir / "dataset")
        logs = write_event_log(dataset, self.out_dir)
        written.extend(logs.values())
        written.append(save_checkpoint(self.out_dir / TRUTH_NAME, truth, truth_hyper))
        written.append(
            self.reports.write_summary(
                "simulation.txt",
                {
                    "n_users": dataset.n_users,
                    "n_items": dataset.n_items,
                    "adoptions": int(dataset.adoptions.nnz),
                    "exposures": int(dataset.exposure.nnz),
                    "adoption_rate": adoption_rate(dataset),
                },
            )
        )
        written.append(self._echo_config())
        return {
            "written": written,
            "event_log": logs,
            "shape": dataset.shape,
            "adoptions": int(dataset.adoptions.nnz),
        }

    def analyze(self, checkpoint: str | Path) -> Dict[str, Any]:
        """Per-item visibility/fitness/relevance table and its correlations."""
        dataset = self.load_dataset()
        state, _ = self._load_matching_checkpoint(checkpoint, dataset)
        decomposition = decompose_items(state, dataset)
        written = [
            self.reports.write_decomposition(decomposition),
            self.reports.write_summary(
                "analysis.txt",
                {
                    "items_with_adopters": len(decomposition.items),
                    "eta_cascade_pearson": decomposition.fitness_correlation,
                    "quality_cascade_pearson": decomposition.quality_correlation,
                    "visibility_cascade_pearson": (
                        decomposition.visibility_correlation
                    ),
                },
            ),
            self._echo_config(),
        ]
        return {"written": written, "decomposition": decomposition}
