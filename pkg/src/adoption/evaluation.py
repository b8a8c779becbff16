"""Recall@X evaluation, per-user cross-validation and item decomposition."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from joblib import Parallel, delayed
from numpy.typing import NDArray
from scipy import stats

from src.adoption import seeding
from src.adoption.baselines import (
    BaselineKind,
    rank_by_scores,
    score_fitness,
    score_random,
    score_relevance,
)
from src.adoption.dataset import AdoptionDataset, sample_negatives, without_adoptions
from src.adoption.errors import DegenerateSplitError
from src.adoption.model import ModelState, fit, score_items
from src.services.config_schema import HyperParams, SurfingParams

logger = logging.getLogger(__name__)

VIP = "vip"
MODEL_TAGS = (VIP, *(kind.value for kind in BaselineKind))
DEFAULT_BOUNDARIES = (1, 2, 4, 8, 16, 32, 64, 128)


def recall_at_x(ranked: Sequence[int], adopted: Set[int], X: int) -> float:
    """Share of the adopted items found in the top ``X`` of ``ranked``."""
    if not adopted:
        raise ValueError("recall is undefined for a user with no adopted items")
    if X < 1:
        raise ValueError(f"X must be >= 1, got {X}")
    top = {int(j) for j in list(ranked)[:X]}
    return len(top & adopted) / len(adopted)


@dataclass(frozen=True, eq=False)
class FoldSplit:
    """Fold id of every adoption, aligned with ``dataset.adopted_items(i)``."""

    fold_count: int
    seed: int
    assignment: Tuple[NDArray[np.int64], ...]

    def fold_sizes(self, i: int) -> NDArray[np.int64]:
        return np.bincount(self.assignment[i], minlength=self.fold_count)


def assign_folds(dataset: AdoptionDataset, fold_count: int, seed: int) -> FoldSplit:
    """Shuffle each user's adoptions and deal them round-robin to folds."""
    if fold_count < 2:
        raise ValueError(f"need at least 2 folds, got {fold_count}")
    rng = seeding.stream(seed, seeding.FOLDS)
    assignment = []
    for i in range(dataset.n_users):
        n = dataset.adopted_items(i).size
        folds = np.empty(n, dtype=np.int64)
        folds[rng.permutation(n)] = np.arange(n) % fold_count
        assignment.append(folds)
    return FoldSplit(fold_count=fold_count, seed=seed, assignment=tuple(assignment))


@dataclass(frozen=True)
class UserFoldRecord:
    model: str
    user: int
    fold: int
    n_train: int
    recalls: Tuple[float, ...]


@dataclass(frozen=True)
class UserSummary:
    """Fold-averaged recall of one user; ``activity`` is the mean training
    adoption count over the folds the user was evaluated on."""

    user: int
    activity: float
    recalls: Tuple[float, ...]


@dataclass
class EvalReport:
    model_tag: str
    x_values: Tuple[int, ...]
    recall_at: Dict[int, float]
    recall_std: Dict[int, float]
    per_user: Dict[int, UserSummary]
    skipped_users: int
    skipped_pairs: int
    records: List[UserFoldRecord] = field(default_factory=list)
    activity_buckets: List["ActivityBucket"] = field(default_factory=list)


@dataclass(frozen=True)
class ActivityBucket:
    model: str
    lower: float
    upper: Optional[float]
    n_users: int
    mean: Optional[float]
    std: Optional[float]

    @property
    def label(self) -> str:
        upper = "inf" if self.upper is None else f"{self.upper:g}"
        return f"[{self.lower:g},{upper})"


def _summarize(
    model: str,
    records: List[UserFoldRecord],
    x_values: Tuple[int, ...],
    n_users: int,
    skipped_pairs: int,
) -> EvalReport:
    by_user: Dict[int, List[UserFoldRecord]] = {}
    for rec in records:
        by_user.setdefault(rec.user, []).append(rec)
    per_user = {
        user: UserSummary(
            user=user,
            activity=float(np.mean([r.n_train for r in recs])),
            recalls=tuple(
                float(np.mean([r.recalls[k] for r in recs]))
                for k in range(len(x_values))
            ),
        )
        for user, recs in sorted(by_user.items())
    }
    matrix = np.array([s.recalls for s in per_user.values()], dtype=float)
    recall_at, recall_std = {}, {}
    for k, X in enumerate(x_values):
        column = matrix[:, k] if matrix.size else np.array([])
        recall_at[X] = float(column.mean()) if column.size else math.nan
        recall_std[X] = float(column.std()) if column.size else math.nan
    return EvalReport(
        model_tag=model,
        x_values=x_values,
        recall_at=recall_at,
        recall_std=recall_std,
        per_user=per_user,
        skipped_users=n_users - len(per_user),
        skipped_pairs=skipped_pairs,
        records=records,
    )


def candidate_items(
    dataset: AdoptionDataset, i: int, test: NDArray[np.int64]
) -> NDArray[np.int64]:
    """Held-out adoptions plus the exposed items user ``i`` never adopted."""
    adopted = dataset.adopted_items(i)
    stream = np.setdiff1d(dataset.exposed_items(i), adopted, assume_unique=True)
    return np.union1d(test, stream).astype(np.int64)


Ranker = Callable[[int, NDArray[np.int64]], NDArray[np.int64]]


def _fold_rankers(
    train: AdoptionDataset,
    models: Sequence[str],
    hyper: HyperParams,
    surfing: SurfingParams,
    seed: int,
    fold: int,
    negatives_per_user: int,
) -> Dict[str, Ranker]:
    negatives = sample_negatives(
        train, negatives_per_user, seeding.stream(seed, seeding.NEGATIVES, fold)
    )
    rankers: Dict[str, Ranker] = {}
    if VIP in models or BaselineKind.FITNESS.value in models:
        vip_state = fit(train, hyper, surfing, seed=seed, negatives=negatives).state

        def rank_vip(i: int, cands: NDArray[np.int64]) -> NDArray[np.int64]:
            return rank_by_scores(cands, score_items(vip_state, i, cands))

        rankers[VIP] = rank_vip
        rankers[BaselineKind.FITNESS.value] = lambda i, c: score_fitness(vip_state, c)
    if BaselineKind.RELEVANCE.value in models:
        pmf_state = fit(
            train,
            hyper,
            surfing,
            seed=seed,
            negatives=negatives,
            use_visibility=False,
            use_fitness=False,
        ).state
        rankers[BaselineKind.RELEVANCE.value] = lambda i, c: score_relevance(
            pmf_state, i, c
        )
    if BaselineKind.RANDOM.value in models:
        rng = seeding.stream(seed, seeding.RANDOM_BASELINE, fold)
        rankers[BaselineKind.RANDOM.value] = lambda i, c: score_random(c, rng)
    return {m: rankers[m] for m in models}


def _run_fold(
    dataset: AdoptionDataset,
    split: FoldSplit,
    fold: int,
    models: Sequence[str],
    x_values: Tuple[int, ...],
    hyper: HyperParams,
    surfing: SurfingParams,
    seed: int,
    negatives_per_user: int,
) -> Tuple[List[UserFoldRecord], int]:
    held_rows: List[int] = []
    held_cols: List[int] = []
    tests: List[NDArray[np.int64]] = []
    for i in range(dataset.n_users):
        test = dataset.adopted_items(i)[split.assignment[i] == fold]
        tests.append(test)
        held_rows.extend([i] * test.size)
        held_cols.extend(test.tolist())
    if not held_rows:
        raise DegenerateSplitError(f"fold {fold} holds out no adoptions")

    train = without_adoptions(dataset, held_rows, held_cols)
    rankers = _fold_rankers(
        train, models, hyper, surfing, seed, fold, negatives_per_user
    )
    records: List[UserFoldRecord] = []
    skipped = 0
    for i, test in enumerate(tests):
        if test.size == 0:
            skipped += 1
            continue
        candidates = candidate_items(dataset, i, test)
        n_train = int(dataset.adopted_items(i).size - test.size)
        targets = set(test.tolist())
        for model in models:
            ranked = rankers[model](i, candidates)
            records.append(
                UserFoldRecord(
                    model=model,
                    user=i,
                    fold=fold,
                    n_train=n_train,
                    recalls=tuple(recall_at_x(ranked, targets, X) for X in x_values),
                )
            )
    logger.info(
        "fold %d: %d held-out adoptions, %d users evaluated",
        fold,
        len(held_rows),
        dataset.n_users - skipped,
    )
    return records, skipped


def cross_validate(
    dataset: AdoptionDataset,
    hyper: HyperParams,
    surfing: SurfingParams,
    models: Sequence[str],
    x_values: Sequence[int],
    seed: int,
    fold_count: int = 5,
    negatives_per_user: int = 20,
    threads: int = 1,
    boundaries: Sequence[int] = DEFAULT_BOUNDARIES,
    bucket_x: int = 3,
) -> List[EvalReport]:
    """Per-user k-fold recall@X for each requested model.

    In every fold the held-out adoptions are removed from training (their
    exposure stays), and each user ranks held-out adoptions together with
    the exposed items the user never adopted.
    """
    models = list(dict.fromkeys(models))
    unknown = [m for m in models if m not in MODEL_TAGS]
    if unknown:
        raise ValueError(f"unknown model(s): {', '.join(unknown)}")
    xs = tuple(int(x) for x in x_values)
    split = assign_folds(dataset, fold_count, seed)

    def run(fold: int) -> Tuple[List[UserFoldRecord], int]:
        return _run_fold(
            dataset, split, fold, models, xs, hyper, surfing, seed, negatives_per_user
        )

    if threads > 1:
        results = Parallel(n_jobs=min(threads, fold_count), prefer="threads")(
            delayed(run)(f) for f in range(fold_count)
        )
    else:
        results = [run(f) for f in range(fold_count)]

    records = [rec for fold_records, _ in results for rec in fold_records]
    skipped_pairs = sum(skipped for _, skipped in results)
    reports = [
        _summarize(
            model,
            [r for r in records if r.model == model],
            xs,
            dataset.n_users,
            skipped_pairs,
        )
        for model in models
    ]
    for report in reports:
        if bucket_x in xs:
            report.activity_buckets = activity_buckets(report, boundaries, bucket_x)
        else:
            logger.warning(
                "%s: no activity buckets, recall@%d was not computed",
                report.model_tag,
                bucket_x,
            )
        logger.info(
            "%s: %s (%d users skipped)",
            report.model_tag,
            ", ".join(f"recall@{X}={report.recall_at[X]:.4f}" for X in xs),
            report.skipped_users,
        )
    return reports


def activity_buckets(
    report: EvalReport,
    boundaries: Sequence[int] = DEFAULT_BOUNDARIES,
    X: int = 3,
) -> List[ActivityBucket]:
    """Mean and standard deviation of recall@X by training activity.

    Buckets are ``[b_k, b_k+1)`` with the last one open; users below the
    first boundary get a leading ``[0, b_0)`` bucket. Empty buckets are kept
    with ``None`` statistics.
    """
    bounds = [float(b) for b in boundaries]
    if not bounds or any(b >= a for b, a in zip(bounds, bounds[1:])):
        raise ValueError(f"boundaries must be strictly increasing: {boundaries}")
    if X not in report.x_values:
        raise ValueError(f"recall@{X} was not computed for {report.model_tag}")
    k = report.x_values.index(X)
    edges: List[Tuple[float, Optional[float]]] = []
    if bounds[0] > 0:
        edges.append((0.0, bounds[0]))
    edges.extend(zip(bounds, [*bounds[1:], None]))

    buckets = []
    for lower, upper in edges:
        values = [
            s.recalls[k]
            for s in report.per_user.values()
            if s.activity >= lower and (upper is None or s.activity < upper)
        ]
        buckets.append(
            ActivityBucket(
                model=report.model_tag,
                lower=lower,
                upper=upper,
                n_users=len(values),
                mean=float(np.mean(values)) if values else None,
                std=float(np.std(values)) if values else None,
            )
        )
    return buckets


def activity_trend(buckets: Sequence[ActivityBucket]) -> float:
    """Spearman correlation of bucket means with bucket order (non-empty only)."""
    means = [b.mean for b in buckets if b.mean is not None]
    if len(means) < 2 or len(set(means)) < 2:
        return math.nan
    return float(stats.spearmanr(np.arange(len(means)), means)[0])


@dataclass(frozen=True)
class ItemDecomposition:
    item: int
    item_id: str
    cascade_size: int
    expected_visibility: float
    expected_fitness: float
    expected_relevance: float

    @property
    def expected_quality(self) -> float:
        """E(I+P): fitness plus relevance over adopters."""
        return self.expected_fitness + self.expected_relevance


@dataclass
class Decomposition:
    items: List[ItemDecomposition]
    fitness_correlation: float
    quality_correlation: float
    visibility_correlation: float


def _pearson(x: Sequence[float], y: Sequence[float]) -> float:
    a, b = np.asarray(x, float), np.asarray(y, float)
    if a.size < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return math.nan
    return float(stats.pearsonr(a, b)[0])


def decompose_items(state: ModelState, dataset: AdoptionDataset) -> Decomposition:
    """Visibility, fitness and relevance expectations over each item's adopters."""
    adopters = dataset.adoptions.tocsc()
    adopters.sort_indices()
    rows: List[ItemDecomposition] = []
    for j in range(dataset.n_items):
        users = adopters.indices[adopters.indptr[j] : adopters.indptr[j + 1]]
        if users.size == 0:
            continue
        delta = state.Theta[:, j] @ state.U[:, users]
        rows.append(
            ItemDecomposition(
                item=j,
                item_id=dataset.item_ids[j],
                cascade_size=int(users.size),
                expected_visibility=float(np.mean(state.v[users])),
                expected_fitness=float(state.eta[j]),
                expected_relevance=float(np.mean(delta)),
            )
        )
    sizes = [r.cascade_size for r in rows]
    return Decomposition(
        items=rows,
        fitness_correlation=_pearson([r.expected_fitness for r in rows], sizes),
        quality_correlation=_pearson([r.expected_quality for r in rows], sizes),
        visibility_correlation=_pearson([r.expected_visibility for r in rows], sizes),
    )


__all__ = [
    "VIP",
    "MODEL_TAGS",
    "recall_at_x",
    "candidate_items",
    "FoldSplit",
    "assign_folds",
    "UserFoldRecord",
    "UserSummary",
    "EvalReport",
    "ActivityBucket",
    "cross_validate",
    "activity_buckets",
    "activity_trend",
    "ItemDecomposition",
    "Decomposition",
    "decompose_items",
]
