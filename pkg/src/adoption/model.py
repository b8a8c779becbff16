"""Model state, complete log-likelihood and MAP coordinate ascent.

An adoption is modelled as ``r_ij ~ N(v_i (u_i . theta_j + eta_j), 1 / c_ij)``
with Gaussian priors on ``u_i``, ``theta_j`` and ``eta_j``. Holding two of the
three blocks fixed, the log-likelihood is an exact ridge problem in the third,
so every coordinate update below is the closed-form maximizer of its block.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
from joblib import Parallel, delayed
from numpy.typing import NDArray
from scipy.linalg import solve

from src.adoption import seeding
from src.adoption.dataset import AdoptionDataset
from src.adoption.distributions import visibility_vector
from src.adoption.errors import NonFiniteLikelihoodError
from src.services.config_schema import HyperParams, SurfingParams

logger = logging.getLogger(__name__)

# pair codes: adopted (4), exposed (2), sampled negative (1)
_ADOPTED, _EXPOSED, _NEGATIVE = 4, 2, 1


@dataclass
class ModelState:
    """``U`` is K x N, ``Theta`` is K x M, ``eta`` has M entries, ``v`` N."""

    U: NDArray[np.float64]
    Theta: NDArray[np.float64]
    eta: NDArray[np.float64]
    v: NDArray[np.float64]

    def __post_init__(self) -> None:
        K, N = self.U.shape
        if self.Theta.shape[0] != K:
            raise ValueError(f"U has {K} topics but Theta has {self.Theta.shape[0]}")
        if self.eta.shape != (self.Theta.shape[1],) or self.v.shape != (N,):
            raise ValueError("eta/v lengths do not match Theta/U")

    @property
    def K(self) -> int:
        return int(self.U.shape[0])

    @property
    def n_users(self) -> int:
        return int(self.U.shape[1])

    @property
    def n_items(self) -> int:
        return int(self.Theta.shape[1])

    def is_valid(self) -> bool:
        finite = all(
            np.all(np.isfinite(a)) for a in (self.U, self.Theta, self.eta, self.v)
        )
        return bool(finite and np.all(self.v > 0) and np.all(self.v <= 1))

    def copy(self) -> "ModelState":
        return ModelState(
            self.U.copy(), self.Theta.copy(), self.eta.copy(), self.v.copy()
        )


def _offsets(index: NDArray[np.int64], n: int) -> NDArray[np.int64]:
    counts = np.bincount(index, minlength=n)
    return np.concatenate(([0], np.cumsum(counts))).astype(np.int64)


@dataclass(frozen=True, eq=False)
class TrainingPairs:
    """The defined (user, item) pairs with their confidence and target.

    Pairs are stored user-major; ``item_order``/``item_ptr`` give an
    item-major view over the same arrays.
    """

    n_users: int
    n_items: int
    users: NDArray[np.int64]
    items: NDArray[np.int64]
    conf: NDArray[np.float64]
    target: NDArray[np.float64]
    user_ptr: NDArray[np.int64]
    item_order: NDArray[np.int64]
    item_ptr: NDArray[np.int64]

    @classmethod
    def from_dataset(
        cls,
        dataset: AdoptionDataset,
        hyper: HyperParams,
        negatives: Optional[sp.csr_matrix] = None,
    ) -> "TrainingPairs":
        """Adopted pairs get ``conf_a``, exposed non-adopted ``conf_b`` and
        sampled unexposed negatives ``conf_c``."""
        codes = (
            dataset.adoptions.astype(np.int64) * _ADOPTED
            + dataset.exposure.astype(np.int64) * _EXPOSED
        )
        if negatives is not None:
            codes = codes + negatives.astype(np.int64) * _NEGATIVE
        codes = sp.csr_matrix(codes)
        codes.eliminate_zeros()
        codes.sort_indices()
        data = codes.data
        conf = np.where(
            data >= _ADOPTED,
            hyper.conf_a,
            np.where(data >= _EXPOSED, hyper.conf_b, hyper.conf_c),
        ).astype(float)
        target = (data >= _ADOPTED).astype(float)
        users = np.repeat(
            np.arange(dataset.n_users, dtype=np.int64), np.diff(codes.indptr)
        )
        items = codes.indices.astype(np.int64)
        return cls.from_arrays(
            dataset.n_users, dataset.n_items, users, items, conf, target
        )

    @classmethod
    def from_arrays(
        cls,
        n_users: int,
        n_items: int,
        users: NDArray[np.int64],
        items: NDArray[np.int64],
        conf: NDArray[np.float64],
        target: NDArray[np.float64],
    ) -> "TrainingPairs":
        order = np.lexsort((items, users))
        users, items = users[order], items[order]
        conf, target = conf[order], target[order]
        if np.any(conf <= 0):
            raise ValueError("confidence must be > 0 on every defined pair")
        user_ptr = _offsets(users, n_users)
        item_order = np.lexsort((users, items))
        item_ptr = _offsets(items, n_items)
        return cls(
            n_users=n_users,
            n_items=n_items,
            users=users,
            items=items,
            conf=conf,
            target=target,
            user_ptr=user_ptr.astype(np.int64),
            item_order=item_order.astype(np.int64),
            item_ptr=item_ptr.astype(np.int64),
        )

    def __len__(self) -> int:
        return int(self.users.size)

    def of_user(self, i: int) -> slice:
        return slice(int(self.user_ptr[i]), int(self.user_ptr[i + 1]))

    def of_item(self, j: int) -> NDArray[np.int64]:
        return self.item_order[self.item_ptr[j] : self.item_ptr[j + 1]]


@dataclass
class FitResult:
    state: ModelState
    trace: List[float] = field(default_factory=list)
    converged: bool = False
    sweeps: int = 0


def relevance(state: ModelState, i: int, j: int) -> float:
    """Personal relevance ``u_i . theta_j``."""
    return float(state.U[:, i] @ state.Theta[:, j])


def predict(state: ModelState, i: int, j: int) -> float:
    """Expected adoption ``v_i (u_i . theta_j + eta_j)``."""
    return float(state.v[i] * (relevance(state, i, j) + state.eta[j]))


def score_items(
    state: ModelState, i: int, items: NDArray[np.int64]
) -> NDArray[np.float64]:
    items = np.asarray(items, dtype=np.int64)
    delta = state.U[:, i] @ state.Theta[:, items]
    return np.asarray(state.v[i] * (delta + state.eta[items]), dtype=float)


def visibility_term(v: NDArray[np.float64]) -> float:
    """``sum_i log v_i``; constant in (U, Theta, eta)."""
    return float(np.sum(np.log(v)))


def log_likelihood(
    state: ModelState,
    pairs: TrainingPairs,
    hyper: HyperParams,
    visibility_const: Optional[float] = None,
) -> float:
    if visibility_const is None:
        visibility_const = visibility_term(state.v)
    delta = np.einsum(
        "kn,kn->n", state.U[:, pairs.users], state.Theta[:, pairs.items]
    )
    resid = pairs.target - state.v[pairs.users] * (delta + state.eta[pairs.items])
    return float(
        -0.5 * hyper.lambda_u * np.sum(state.U**2)
        - 0.5 * hyper.lambda_theta * np.sum(state.Theta**2)
        - 0.5 * hyper.lambda_eta * np.sum(state.eta**2)
        - 0.5 * np.sum(pairs.conf * resid**2)
        + visibility_const
    )


def update_user(
    state: ModelState, pairs: TrainingPairs, hyper: HyperParams, i: int
) -> NDArray[np.float64]:
    """Maximizer over ``u_i``: design rows ``v_i theta_j``, weights ``c_ij``,
    targets ``r_ij - v_i eta_j``, ridge ``lambda_u``."""
    sl = pairs.of_user(i)
    items = pairs.items[sl]
    if items.size == 0:
        return np.zeros(state.K)
    c = pairs.conf[sl]
    vi = state.v[i]
    X = vi * state.Theta[:, items]
    A = hyper.lambda_u * np.eye(state.K) + (X * c) @ X.T
    b = X @ (c * (pairs.target[sl] - vi * state.eta[items]))
    return np.asarray(solve(A, b, assume_a="pos"), dtype=float)


def update_item(
    state: ModelState, pairs: TrainingPairs, hyper: HyperParams, j: int
) -> NDArray[np.float64]:
    """Maximizer over ``theta_j``: design rows ``v_i u_i``, weights ``c_ij``,
    targets ``r_ij - v_i eta_j``, ridge ``lambda_theta``."""
    idx = pairs.of_item(j)
    if idx.size == 0:
        return np.zeros(state.K)
    users = pairs.users[idx]
    c = pairs.conf[idx]
    vu = state.v[users]
    X = state.U[:, users] * vu
    A = hyper.lambda_theta * np.eye(state.K) + (X * c) @ X.T
    b = X @ (c * (pairs.target[idx] - vu * state.eta[j]))
    return np.asarray(solve(A, b, assume_a="pos"), dtype=float)


def update_fitness(
    state: ModelState, pairs: TrainingPairs, hyper: HyperParams, j: int
) -> float:
    idx = pairs.of_item(j)
    if idx.size == 0:
        return 0.0
    users = pairs.users[idx]
    c = pairs.conf[idx]
    vu = state.v[users]
    delta = state.Theta[:, j] @ state.U[:, users]
    numer = np.sum(c * vu * (pairs.target[idx] - vu * delta))
    return float(numer / (hyper.lambda_eta + np.sum(c * vu**2)))


def init_state(
    n_users: int,
    n_items: int,
    hyper: HyperParams,
    v: NDArray[np.float64],
    seed: int,
) -> ModelState:
    """Small symmetric start: factors ~ N(0, init_scale^2), eta = 0."""
    rng = seeding.stream(seed, seeding.INIT)
    U = rng.normal(0.0, hyper.init_scale, size=(hyper.K, n_users))
    Theta = rng.normal(0.0, hyper.init_scale, size=(hyper.K, n_items))
    return ModelState(U=U, Theta=Theta, eta=np.zeros(n_items), v=np.asarray(v, float))


def _solve_all(
    n: int, solver: Callable[[int], NDArray[np.float64] | float], threads: int
) -> List[NDArray[np.float64] | float]:
    if threads <= 1 or n < 2 * threads:
        return [solver(k) for k in range(n)]
    # threads share the state; numpy and LAPACK release the GIL
    return Parallel(n_jobs=threads, prefer="threads")(
        delayed(solver)(k) for k in range(n)
    )


def run_block(
    block: str,
    state: ModelState,
    pairs: TrainingPairs,
    hyper: HyperParams,
    threads: int = 1,
) -> None:
    """Replace one coordinate block in place; updates inside a block are
    mutually independent, so they all read the pre-block state."""
    if block == "users":
        cols = _solve_all(
            state.n_users, lambda i: update_user(state, pairs, hyper, i), threads
        )
        if cols:
            state.U = np.column_stack(cols)
    elif block == "items":
        cols = _solve_all(
            state.n_items, lambda j: update_item(state, pairs, hyper, j), threads
        )
        if cols:
            state.Theta = np.column_stack(cols)
    elif block == "fitness":
        vals = _solve_all(
            state.n_items, lambda j: update_fitness(state, pairs, hyper, j), threads
        )
        state.eta = np.asarray(vals, dtype=float)
    else:
        raise ValueError(f"unknown coordinate block: {block}")


def fit(
    dataset: AdoptionDataset,
    hyper: HyperParams,
    surfing: SurfingParams,
    *,
    seed: int = 0,
    negatives: Optional[sp.csr_matrix] = None,
    use_visibility: bool = True,
    use_fitness: bool = True,
    threads: int = 1,
    pairs: Optional[TrainingPairs] = None,
    state: Optional[ModelState] = None,
) -> FitResult:
    """MAP estimate of (U, Theta, eta) by coordinate ascent.

    ``use_visibility=False`` clamps ``v`` to 1 and ``use_fitness=False``
    clamps ``eta`` to 0; with both off this is confidence-weighted matrix
    factorization.
    """
    if dataset.n_users == 0 or dataset.n_items == 0:
        raise ValueError("cannot fit an empty dataset")
    if pairs is None:
        pairs = TrainingPairs.from_dataset(dataset, hyper, negatives)
    if state is None:
        if use_visibility:
            v = visibility_vector(
                dataset.rho, surfing, hyper.L_max, hyper.tail_tol, dataset.user_ids
            )
        else:
            v = np.ones(dataset.n_users)
        state = init_state(dataset.n_users, dataset.n_items, hyper, v, seed)
    else:
        state = state.copy()
    blocks = [b for b in hyper.sweep_order if use_fitness or b != "fitness"]
    if not blocks:
        raise ValueError("no coordinate blocks left to update")
    const = visibility_term(state.v)

    ll = log_likelihood(state, pairs, hyper, const)
    result = FitResult(state=state, trace=[ll])
    logger.info(
        "fitting K=%d on %d users x %d items, %d defined pairs, blocks %s",
        hyper.K,
        dataset.n_users,
        dataset.n_items,
        len(pairs),
        ",".join(blocks),
    )
    for sweep in range(1, hyper.max_iters + 1):
        for block in blocks:
            run_block(block, state, pairs, hyper, threads)
            new_ll = log_likelihood(state, pairs, hyper, const)
            if not math.isfinite(new_ll):
                raise NonFiniteLikelihoodError(block, sweep)
        result.trace.append(new_ll)
        result.sweeps = sweep
        change = abs(new_ll - ll) / max(abs(ll), np.finfo(float).tiny)
        logger.debug("sweep %d: loglik %.12g (rel change %.3g)", sweep, new_ll, change)
        ll = new_ll
        if change < hyper.tol:
            result.converged = True
            break
    logger.info(
        "finished after %d sweep(s), loglik %.8g, converged=%s",
        result.sweeps,
        ll,
        result.converged,
    )
    return result


__all__ = [
    "ModelState",
    "TrainingPairs",
    "FitResult",
    "relevance",
    "predict",
    "score_items",
    "visibility_term",
    "log_likelihood",
    "update_user",
    "update_item",
    "update_fitness",
    "init_state",
    "run_block",
    "fit",
]
