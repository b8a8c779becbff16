"""Comparison recommenders: Random, Fitness and Relevance."""

from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.adoption import seeding
from src.adoption.model import ModelState


class BaselineKind(str, Enum):
    RANDOM = "random"
    FITNESS = "fitness"
    RELEVANCE = "relevance"

    def __str__(self) -> str:
        return self.value


def rank_by_scores(items: ArrayLike, scores: ArrayLike) -> NDArray[np.int64]:
    """Items by descending score, ties broken by ascending item index."""
    items = np.asarray(items, dtype=np.int64)
    scores = np.asarray(scores, dtype=float)
    return items[np.lexsort((items, -scores))]


def score_random(
    stream_items: Sequence[int] | NDArray[np.int64],
    rng: np.random.Generator | int,
) -> NDArray[np.int64]:
    """Uniform random permutation of the user's stream.

    An integer ``rng`` is a seed for the random-baseline sub-stream.
    """
    if not isinstance(rng, np.random.Generator):
        rng = seeding.stream(int(rng), seeding.RANDOM_BASELINE)
    items = np.sort(np.asarray(stream_items, dtype=np.int64))
    return rng.permutation(items)


def score_fitness(
    state: ModelState, stream_items: Sequence[int] | NDArray[np.int64]
) -> NDArray[np.int64]:
    items = np.asarray(stream_items, dtype=np.int64)
    return rank_by_scores(items, state.eta[items])


def score_relevance(
    pmf_state: ModelState, i: int, stream_items: Sequence[int] | NDArray[np.int64]
) -> NDArray[np.int64]:
    """Rank by ``u_i . theta_j`` of a state fitted with v = 1 and eta = 0."""
    items = np.asarray(stream_items, dtype=np.int64)
    return rank_by_scores(items, pmf_state.U[:, i] @ pmf_state.Theta[:, items])


__all__ = [
    "BaselineKind",
    "rank_by_scores",
    "score_random",
    "score_fitness",
    "score_relevance",
]
