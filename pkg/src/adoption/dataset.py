"""Adoption logs, user metadata and the sparse training representation.

Input formats (UTF-8, tab-separated, ``#`` lines and blank lines ignored):

``events``     ``user_id  item_id  timestamp  exposed(0|1)``, one adoption per line
``meta``       ``user_id  n_friends  n_posts  [rho]``; the optional ``rho``
               column is a measured load ratio that overrides estimation
``exposures``  ``user_id  item_id``, items that entered a user's stream

Serialized dataset directory (see ``save_dataset``)::

    users.txt       one user id per line, index order
    items.txt       one item id per line, index order
    meta.tsv        metadata in the ingestion format
    rho.txt         one load ratio per line (17 significant digits)
    adoptions.txt   ``row col value`` triplets of R
    exposure.txt    ``row col value`` triplets of the exposure mask
    stats.txt       ``key value`` ingestion counters
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from src.adoption.errors import DatasetError, MalformedLineError, UnknownUserError

logger = logging.getLogger(__name__)

POST_RATE_COEFF = 1.4
VISIT_RATE_COEFF = 7.6


@dataclass(frozen=True)
class AdoptionEvent:
    user_id: str
    item_id: str
    timestamp: int
    exposed: bool

    def __post_init__(self) -> None:
        if not self.user_id or not self.item_id:
            raise ValueError("user and item ids must be non-empty")
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")


@dataclass(frozen=True)
class UserMeta:
    user_id: str
    n_friends: int
    n_posts: int
    rho: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.user_id:
            raise ValueError("user id must be non-empty")
        if self.n_friends < 0 or self.n_posts < 0:
            raise ValueError(f"negative counts for user {self.user_id}")
        if self.rho is not None and (not math.isfinite(self.rho) or self.rho < 0):
            raise ValueError(f"rho must be finite and >= 0 for user {self.user_id}")


def estimate_rho(
    meta: UserMeta,
    post_rate_coeff: float = POST_RATE_COEFF,
    visit_rate_coeff: float = VISIT_RATE_COEFF,
    min_posts: int = 1,
) -> float:
    """Expected new posts per visit: incoming post rate over visit rate.

    Incoming posts scale with the number of friends, visits with the number
    of the user's own posts. Users with no posts are floored to ``min_posts``.
    """
    if post_rate_coeff <= 0 or visit_rate_coeff <= 0:
        raise ValueError("rate coefficients must be > 0")
    posts = max(meta.n_posts, min_posts)
    return (post_rate_coeff * meta.n_friends) / (visit_rate_coeff * posts)


@dataclass(frozen=True, eq=False)
class AdoptionDataset:
    user_ids: Tuple[str, ...]
    item_ids: Tuple[str, ...]
    adoptions: sp.csr_matrix
    exposure: sp.csr_matrix
    user_meta: Tuple[UserMeta, ...]
    rho: NDArray[np.float64]
    stats: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        shape = (len(self.user_ids), len(self.item_ids))
        for name in ("adoptions", "exposure"):
            mat = getattr(self, name)
            if mat.shape != shape:
                raise DatasetError(f"{name} has shape {mat.shape}, expected {shape}")
            if mat.nnz and not np.all(mat.data == 1):
                raise DatasetError(f"{name} entries must be 0 or 1")
        if len(self.user_meta) != shape[0] or self.rho.shape != (shape[0],):
            raise DatasetError("per-user metadata does not match the user count")
        if not np.all(np.isfinite(self.rho)) or np.any(self.rho < 0):
            raise DatasetError("rho must be finite and >= 0 for every user")

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_users, self.n_items

    def adopted_items(self, i: int) -> NDArray[np.int64]:
        return _row(self.adoptions, i)

    def exposed_items(self, i: int) -> NDArray[np.int64]:
        return _row(self.exposure, i)

    def adoption_counts(self) -> NDArray[np.int64]:
        return np.diff(self.adoptions.indptr).astype(np.int64)

    def cascade_sizes(self) -> NDArray[np.int64]:
        return np.asarray(self.adoptions.sum(axis=0), dtype=np.int64).ravel()

    def same_as(self, other: "AdoptionDataset") -> bool:
        return (
            self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and self.user_meta == other.user_meta
            and np.array_equal(self.rho, other.rho)
            and (self.adoptions != other.adoptions).nnz == 0
            and (self.exposure != other.exposure).nnz == 0
        )


def _row(mat: sp.csr_matrix, i: int) -> NDArray[np.int64]:
    return np.sort(mat.indices[mat.indptr[i] : mat.indptr[i + 1]]).astype(np.int64)


def _binary(
    rows: Sequence[int], cols: Sequence[int], shape: Tuple[int, int]
) -> sp.csr_matrix:
    mat = sp.csr_matrix(
        (
            np.ones(len(rows), dtype=np.int8),
            (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)),
        ),
        shape=shape,
        dtype=np.int8,
    )
    mat.sum_duplicates()
    mat.data[:] = 1
    mat.sort_indices()
    return mat


def build_dataset(
    events: Iterable[AdoptionEvent],
    metas: Iterable[UserMeta],
    exposures: Iterable[Tuple[str, str]] = (),
    post_rate_coeff: float = POST_RATE_COEFF,
    visit_rate_coeff: float = VISIT_RATE_COEFF,
    min_posts: int = 1,
) -> AdoptionDataset:
    """Index users (from metadata) and items (from events and exposures).

    Indices follow lexicographic id order so identical inputs always map to
    identical matrices.
    """
    events = list(events)
    exposures = list(exposures)
    meta_by_user: Dict[str, UserMeta] = {}
    for meta in metas:
        if meta.user_id in meta_by_user:
            raise DatasetError(f"duplicate metadata for user {meta.user_id}")
        meta_by_user[meta.user_id] = meta

    unknown = {e.user_id for e in events} - meta_by_user.keys()
    if unknown:
        raise UnknownUserError(unknown, "events")
    unknown = {u for u, _ in exposures} - meta_by_user.keys()
    if unknown:
        raise UnknownUserError(unknown, "exposures")

    user_ids = tuple(sorted(meta_by_user))
    item_ids = tuple(sorted({e.item_id for e in events} | {j for _, j in exposures}))
    user_index = {u: k for k, u in enumerate(user_ids)}
    item_index = {j: k for k, j in enumerate(item_ids)}
    shape = (len(user_ids), len(item_ids))

    seen = set()
    duplicates = 0
    a_rows: List[int] = []
    a_cols: List[int] = []
    x_rows: List[int] = []
    x_cols: List[int] = []
    for event in events:
        pair = (user_index[event.user_id], item_index[event.item_id])
        if pair in seen:
            duplicates += 1
        seen.add(pair)
        a_rows.append(pair[0])
        a_cols.append(pair[1])
        if event.exposed:
            x_rows.append(pair[0])
            x_cols.append(pair[1])
    for user_id, item_id in exposures:
        x_rows.append(user_index[user_id])
        x_cols.append(item_index[item_id])

    user_meta = tuple(meta_by_user[u] for u in user_ids)
    floored = sum(1 for m in user_meta if m.rho is None and m.n_posts == 0)
    rho = np.array(
        [
            (
                m.rho
                if m.rho is not None
                else estimate_rho(m, post_rate_coeff, visit_rate_coeff, min_posts)
            )
            for m in user_meta
        ],
        dtype=float,
    )
    if duplicates:
        logger.warning("ignored %d duplicate (user, item) adoption(s)", duplicates)
    if floored:
        logger.warning(
            "%d user(s) with no posts floored to %d post(s)", floored, min_posts
        )

    return AdoptionDataset(
        user_ids=user_ids,
        item_ids=item_ids,
        adoptions=_binary(a_rows, a_cols, shape),
        exposure=_binary(x_rows, x_cols, shape),
        user_meta=user_meta,
        rho=rho,
        stats={"duplicates": duplicates, "floored_users": floored},
    )


def _lines(path: Path) -> Iterator[Tuple[int, List[str]]]:
    with path.open("r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            yield line_no, line.split("\t")


def _int_field(path: Path, line_no: int, value: str, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise MalformedLineError(str(path), line_no, f"{name} is not an integer")


def read_events(path: str | Path) -> List[AdoptionEvent]:
    path = Path(path)
    events = []
    for line_no, fields in _lines(path):
        if len(fields) != 4:
            raise MalformedLineError(
                str(path), line_no, f"expected 4 fields, got {len(fields)}"
            )
        user_id, item_id, ts, exposed = fields
        if exposed not in ("0", "1"):
            raise MalformedLineError(str(path), line_no, "exposed must be 0 or 1")
        try:
            events.append(
                AdoptionEvent(
                    user_id,
                    item_id,
                    _int_field(path, line_no, ts, "timestamp"),
                    exposed == "1",
                )
            )
        except ValueError as e:
            raise MalformedLineError(str(path), line_no, str(e))
    return events


def read_meta(path: str | Path) -> List[UserMeta]:
    path = Path(path)
    metas = []
    for line_no, fields in _lines(path):
        if len(fields) not in (3, 4):
            raise MalformedLineError(
                str(path), line_no, f"expected 3 or 4 fields, got {len(fields)}"
            )
        rho: Optional[float] = None
        if len(fields) == 4:
            try:
                rho = float(fields[3])
            except ValueError:
                raise MalformedLineError(str(path), line_no, "rho is not a number")
        try:
            metas.append(
                UserMeta(
                    fields[0],
                    _int_field(path, line_no, fields[1], "n_friends"),
                    _int_field(path, line_no, fields[2], "n_posts"),
                    rho,
                )
            )
        except ValueError as e:
            raise MalformedLineError(str(path), line_no, str(e))
    return metas


def read_exposures(path: str | Path) -> List[Tuple[str, str]]:
    path = Path(path)
    pairs = []
    for line_no, fields in _lines(path):
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise MalformedLineError(str(path), line_no, "expected user and item id")
        pairs.append((fields[0], fields[1]))
    return pairs


def load_events(
    path: str | Path,
    meta_path: str | Path,
    exposures_path: Optional[str | Path] = None,
    post_rate_coeff: float = POST_RATE_COEFF,
    visit_rate_coeff: float = VISIT_RATE_COEFF,
    min_posts: int = 1,
) -> AdoptionDataset:
    """Parse the event, metadata and optional exposure logs into a dataset."""
    dataset = build_dataset(
        read_events(path),
        read_meta(meta_path),
        read_exposures(exposures_path) if exposures_path else (),
        post_rate_coeff,
        visit_rate_coeff,
        min_posts,
    )
    logger.info(
        "loaded %d users, %d items, %d adoptions, %d exposures from %s",
        dataset.n_users,
        dataset.n_items,
        dataset.adoptions.nnz,
        dataset.exposure.nnz,
        path,
    )
    return dataset


def _meta_line(meta: UserMeta) -> str:
    cols = [meta.user_id, str(meta.n_friends), str(meta.n_posts)]
    if meta.rho is not None:
        cols.append(f"{meta.rho:.17g}")
    return "\t".join(cols) + "\n"


def _write_triplets(path: Path, mat: sp.csr_matrix) -> None:
    coo = mat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with path.open("w", encoding="utf-8") as f:
        for k in order:
            f.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]}\n")


def _read_triplets(path: Path, shape: Tuple[int, int]) -> sp.csr_matrix:
    rows, cols = [], []
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3 or parts[2] != "1":
                raise MalformedLineError(str(path), line_no, "expected 'row col 1'")
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
    return _binary(rows, cols, shape)


def _read_ids(path: Path) -> Tuple[str, ...]:
    with path.open("r", encoding="utf-8") as f:
        return tuple(line.rstrip("\n") for line in f if line.rstrip("\n"))


def save_dataset(dataset: AdoptionDataset, directory: str | Path) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, ids in (("users.txt", dataset.user_ids), ("items.txt", dataset.item_ids)):
        path = directory / name
        path.write_text("".join(f"{x}\n" for x in ids), encoding="utf-8")
        written.append(path)
    path = directory / "meta.tsv"
    path.write_text("".join(_meta_line(m) for m in dataset.user_meta), "utf-8")
    written.append(path)
    path = directory / "rho.txt"
    path.write_text("".join(f"{r:.17g}\n" for r in dataset.rho), encoding="utf-8")
    written.append(path)
    for name, mat in (
        ("adoptions.txt", dataset.adoptions),
        ("exposure.txt", dataset.exposure),
    ):
        path = directory / name
        _write_triplets(path, mat)
        written.append(path)
    path = directory / "stats.txt"
    path.write_text(
        "".join(f"{k} {v}\n" for k, v in sorted(dataset.stats.items())), "utf-8"
    )
    written.append(path)
    return written


def load_dataset(directory: str | Path) -> AdoptionDataset:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Dataset directory not found: {directory}")
    user_ids = _read_ids(directory / "users.txt")
    item_ids = _read_ids(directory / "items.txt")
    metas = read_meta(directory / "meta.tsv")
    if tuple(m.user_id for m in metas) != user_ids:
        raise DatasetError(f"{directory}/meta.tsv does not follow users.txt order")
    with (directory / "rho.txt").open("r", encoding="utf-8") as f:
        rho = np.array([float(x) for x in f if x.strip()], dtype=float)
    stats = {}
    with (directory / "stats.txt").open("r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                key, value = line.split()
                stats[key] = int(value)
    shape = (len(user_ids), len(item_ids))
    return AdoptionDataset(
        user_ids=user_ids,
        item_ids=item_ids,
        adoptions=_read_triplets(directory / "adoptions.txt", shape),
        exposure=_read_triplets(directory / "exposure.txt", shape),
        user_meta=tuple(metas),
        rho=rho,
        stats=stats,
    )


def write_event_log(
    dataset: AdoptionDataset, directory: str | Path
) -> Dict[str, Path]:
    """Write ``events.tsv``, ``meta.tsv`` and ``exposures.tsv`` for ``load_events``.

    Metadata always carries the explicit ``rho`` column so the load ratios
    survive the trip unchanged.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "events": directory / "events.tsv",
        "meta": directory / "meta.tsv",
        "exposures": directory / "exposures.tsv",
    }
    adopted = dataset.adoptions.tocoo()
    exposure = dataset.exposure.tocsr()
    with paths["events"].open("w", encoding="utf-8") as f:
        f.write("# user_id\titem_id\ttimestamp\texposed\n")
        for k in np.lexsort((adopted.col, adopted.row)):
            i, j = int(adopted.row[k]), int(adopted.col[k])
            exposed = int(exposure[i, j] != 0)
            f.write(
                f"{dataset.user_ids[i]}\t{dataset.item_ids[j]}\t{j}\t{exposed}\n"
            )
    with paths["meta"].open("w", encoding="utf-8") as f:
        f.write("# user_id\tn_friends\tn_posts\trho\n")
        for meta, rho in zip(dataset.user_meta, dataset.rho):
            f.write(
                _meta_line(
                    UserMeta(meta.user_id, meta.n_friends, meta.n_posts, float(rho))
                )
            )
    stream_only = sp.csr_matrix(
        dataset.exposure - dataset.adoptions.multiply(dataset.exposure)
    )
    stream_only.eliminate_zeros()
    coo = stream_only.tocoo()
    with paths["exposures"].open("w", encoding="utf-8") as f:
        f.write("# user_id\titem_id\n")
        for k in np.lexsort((coo.col, coo.row)):
            f.write(
                f"{dataset.user_ids[coo.row[k]]}\t{dataset.item_ids[coo.col[k]]}\n"
            )
    return paths


def sample_negatives(
    dataset: AdoptionDataset, per_user: int, rng: np.random.Generator
) -> sp.csr_matrix:
    """Per user, up to ``per_user`` items neither adopted nor exposed."""
    rows: List[int] = []
    cols: List[int] = []
    all_items = np.arange(dataset.n_items)
    if per_user > 0:
        for i in range(dataset.n_users):
            taken = np.union1d(dataset.adopted_items(i), dataset.exposed_items(i))
            pool = np.setdiff1d(all_items, taken, assume_unique=True)
            k = min(per_user, pool.size)
            if k == 0:
                continue
            chosen = np.sort(rng.choice(pool, size=k, replace=False))
            rows.extend([i] * k)
            cols.extend(chosen.tolist())
    return _binary(rows, cols, dataset.shape)


def without_adoptions(
    dataset: AdoptionDataset, rows: Sequence[int], cols: Sequence[int]
) -> AdoptionDataset:
    """Training view with the given adoptions removed; exposure is kept."""
    held = _binary(rows, cols, dataset.shape)
    remaining = sp.csr_matrix(dataset.adoptions - dataset.adoptions.multiply(held))
    remaining.eliminate_zeros()
    remaining = remaining.astype(np.int8)
    remaining.sort_indices()
    return AdoptionDataset(
        user_ids=dataset.user_ids,
        item_ids=dataset.item_ids,
        adoptions=remaining,
        exposure=dataset.exposure,
        user_meta=dataset.user_meta,
        rho=dataset.rho,
        stats=dict(dataset.stats),
    )


__all__ = [
    "AdoptionEvent",
    "UserMeta",
    "AdoptionDataset",
    "estimate_rho",
    "build_dataset",
    "read_events",
    "read_meta",
    "read_exposures",
    "load_events",
    "save_dataset",
    "load_dataset",
    "write_event_log",
    "sample_negatives",
    "without_adoptions",
]
