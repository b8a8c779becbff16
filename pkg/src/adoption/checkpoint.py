"""Plain-text model checkpoints.

Layout (tab-separated, values with 17 significant digits)::

    # vip-checkpoint 1
    N       <users>
    M       <items>
    K       <topics>
    <hyperparameter>  <value>      one line per HyperParams field
    U       K       N
    <K rows of N values>
    Theta   K       M
    <K rows of M values>
    eta     M
    <one row of M values>
    v       N
    <one row of N values>
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterator, List, TextIO, Tuple

import numpy as np
from numpy.typing import NDArray

from src.adoption.errors import CheckpointError
from src.adoption.model import ModelState
from src.services.config_schema import HyperParams

MAGIC = "# vip-checkpoint 1"


def _write_rows(f: TextIO, rows: NDArray[np.float64]) -> None:
    np.savetxt(f, np.atleast_2d(rows), fmt="%.17g", delimiter="\t")


def save_checkpoint(
    path: str | Path, state: ModelState, hyper: HyperParams
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(MAGIC + "\n")
        f.write(f"N\t{state.n_users}\nM\t{state.n_items}\n")
        for key, value in hyper.model_dump().items():
            if isinstance(value, list):
                value = ",".join(value)
            elif isinstance(value, float):
                value = f"{value:.17g}"
            f.write(f"{key}\t{value}\n")
        f.write(f"U\t{state.K}\t{state.n_users}\n")
        _write_rows(f, state.U)
        f.write(f"Theta\t{state.K}\t{state.n_items}\n")
        _write_rows(f, state.Theta)
        f.write(f"eta\t{state.n_items}\n")
        _write_rows(f, state.eta)
        f.write(f"v\t{state.n_users}\n")
        _write_rows(f, state.v)
    return path


def _rows(
    lines: Iterator[str], count: int, n: int, path: Path
) -> NDArray[np.float64]:
    block = [line for _, line in zip(range(count), lines)]
    if len(block) < count:
        raise CheckpointError(f"{path}: truncated checkpoint")
    try:
        values = np.loadtxt(block, delimiter="\t", ndmin=2, dtype=float)
    except ValueError:
        raise CheckpointError(f"{path}: non-numeric value in matrix row")
    if values.shape != (count, n):
        raise CheckpointError(
            f"{path}: expected {count} x {n} values, got {values.shape}"
        )
    return values


def _section(lines: Iterator[str], name: str, path: Path) -> List[int]:
    line = next(lines, None)
    fields = line.rstrip("\n").split("\t") if line else []
    if not fields or fields[0] != name:
        raise CheckpointError(f"{path}: expected section {name!r}")
    return [int(x) for x in fields[1:]]


def load_checkpoint(path: str | Path) -> Tuple[ModelState, HyperParams]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    with path.open("r", encoding="utf-8") as f:
        lines = iter(f.readlines())
    if next(lines, "").rstrip("\n") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")

    header: Dict[str, str] = {}
    for line in lines:
        key, _, value = line.rstrip("\n").partition("\t")
        if key == "U":
            K, N = (int(x) for x in value.split("\t"))
            break
        header[key] = value
    else:
        raise CheckpointError(f"{path}: missing factor matrices")
    try:
        M = int(header.pop("M"))
        if int(header.pop("N")) != N or int(header["K"]) != K:
            raise CheckpointError(f"{path}: header disagrees with matrix shapes")
        raw: Dict[str, object] = dict(header)
        raw["sweep_order"] = header["sweep_order"].split(",")
        hyper = HyperParams.model_validate(raw)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: bad header ({e})")

    U = _rows(lines, K, N, path)
    _section(lines, "Theta", path)
    Theta = _rows(lines, K, M, path)
    _section(lines, "eta", path)
    eta = _rows(lines, 1, M, path)[0]
    _section(lines, "v", path)
    v = _rows(lines, 1, N, path)[0]
    return ModelState(U=U, Theta=Theta, eta=eta, v=v), hyper


__all__ = ["save_checkpoint", "load_checkpoint"]
