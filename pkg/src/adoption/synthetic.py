"""Synthetic adoption logs drawn from the generative process.

For each user: ``u_i ~ N(0, I/lambda_u)``, load ``rho_i`` uniform in the
configured range and visibility ``v_i`` from the surfing law. For each item:
``theta_j ~ N(0, I/lambda_theta)``, ``eta_j ~ N(0, 1/lambda_eta)``. Each
exposed pair draws ``r_ij ~ N(v_i (u_i . theta_j + eta_j), 1/noise_precision)``
and counts as an adoption when ``r_ij`` exceeds the adoption cut.

With a positive ``topic_strength`` user ``i`` leans on topic ``i mod K`` and
item ``j`` on topic ``j mod K``: that coordinate of the factor is shifted by
the strength, so on-topic pairs score about ``strength**2`` above off-topic ones.
"""

from __future__ import annotations

import logging
from typing import List, Tuple

import numpy as np

from src.adoption import seeding
from src.adoption.dataset import (
    POST_RATE_COEFF,
    VISIT_RATE_COEFF,
    AdoptionDataset,
    AdoptionEvent,
    UserMeta,
    build_dataset,
)
from src.adoption.distributions import (
    DEFAULT_L_MAX,
    DEFAULT_TAIL_TOL,
    visibility_vector,
)
from src.adoption.model import ModelState
from src.services.config_schema import SurfingParams, SyntheticParams

logger = logging.getLogger(__name__)


def _ids(prefix: str, n: int) -> List[str]:
    width = len(str(max(n - 1, 0)))
    return [f"{prefix}{k:0{width}d}" for k in range(n)]


def generate_synthetic(
    params: SyntheticParams,
    surfing: SurfingParams,
    seed: int,
    L_max: int = DEFAULT_L_MAX,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> Tuple[AdoptionDataset, ModelState]:
    """Sample a dataset and return it with the ground-truth state.

    Every item is exposed to at least one user so item indices of the dataset
    line up with the columns of the ground truth.
    """
    if params.exposure_density <= 0:
        raise ValueError("exposure density must be > 0")
    N, M, K = params.n_users, params.n_items, params.K
    rng = seeding.stream(seed, seeding.SYNTHETIC)

    U = rng.normal(0.0, 1.0 / np.sqrt(params.lambda_u), size=(K, N))
    Theta = rng.normal(0.0, 1.0 / np.sqrt(params.lambda_theta), size=(K, M))
    eta = rng.normal(0.0, 1.0 / np.sqrt(params.lambda_eta), size=M)
    if params.topic_strength > 0:
        U[np.arange(N) % K, np.arange(N)] += params.topic_strength
        Theta[np.arange(M) % K, np.arange(M)] += params.topic_strength
    if params.planted_items:
        planted = rng.choice(M, size=params.planted_items, replace=False)
        eta[planted] = params.planted_fitness
    rho = rng.uniform(params.rho_min, params.rho_max, size=N)
    v = visibility_vector(rho, surfing, L_max, tail_tol)

    exposed = rng.random((N, M)) < params.exposure_density
    for j in np.flatnonzero(~exposed.any(axis=0)):
        exposed[rng.integers(N), j] = True
    mean = v[:, None] * (U.T @ Theta + eta[None, :])
    noise = rng.normal(0.0, 1.0 / np.sqrt(params.noise_precision), size=(N, M))
    adopted = exposed & (mean + noise > params.adoption_cut)

    user_ids, item_ids = _ids("u", N), _ids("i", M)
    n_posts = rng.integers(1, 50, size=N)
    metas = [
        UserMeta(
            user_ids[i],
            int(round(rho[i] * VISIT_RATE_COEFF * n_posts[i] / POST_RATE_COEFF)),
            int(n_posts[i]),
            float(rho[i]),
        )
        for i in range(N)
    ]
    rows, cols = np.nonzero(adopted)
    events = [
        AdoptionEvent(user_ids[i], item_ids[j], int(j), True)
        for i, j in zip(rows.tolist(), cols.tolist())
    ]
    rows, cols = np.nonzero(exposed & ~adopted)
    stream = [(user_ids[i], item_ids[j]) for i, j in zip(rows.tolist(), cols.tolist())]

    dataset = build_dataset(events, metas, stream)
    rate = adoption_rate(dataset)
    logger.info(
        "simulated %d users x %d items: %d exposures, %d adoptions (rate %.3f)",
        N,
        M,
        int(exposed.sum()),
        len(events),
        rate,
    )
    low, high = params.adoption_band
    if not low <= rate <= high:
        logger.warning(
            "adoption rate %.4f is outside the target band [%g, %g]", rate, low, high
        )
    return dataset, ModelState(U=U, Theta=Theta, eta=eta, v=v)


def adoption_rate(dataset: AdoptionDataset) -> float:
    """Adoptions per exposed pair."""
    exposed = dataset.exposure.nnz
    return dataset.adoptions.nnz / exposed if exposed else 0.0


__all__ = ["generate_synthetic", "adoption_rate"]
