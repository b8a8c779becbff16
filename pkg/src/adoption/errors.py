"""Exception hierarchy for the adoption model."""

from __future__ import annotations

from typing import Iterable, Optional, Sequence


class AdoptionError(Exception):
    """Base class for all domain errors."""


class DatasetError(AdoptionError):
    pass


class MalformedLineError(DatasetError):
    def __init__(self, path: str, line_no: int, reason: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")


class UnknownUserError(DatasetError):
    def __init__(self, users: Iterable[str], source: str = "events"):
        self.users = sorted(set(users))
        shown = ", ".join(self.users[:10])
        more = f" (+{len(self.users) - 10} more)" if len(self.users) > 10 else ""
        super().__init__(
            f"{len(self.users)} user(s) in {source} missing from metadata: "
            f"{shown}{more}"
        )


class VisibilityTruncationError(AdoptionError):
    def __init__(
        self,
        rho: float,
        L_max: int,
        tail_mass: float,
        tol: float,
        user: Optional[str] = None,
    ):
        self.rho = rho
        self.L_max = L_max
        self.tail_mass = tail_mass
        self.tol = tol
        self.user = user
        who = f"user {user}: " if user is not None else ""
        super().__init__(
            f"{who}geometric tail mass {tail_mass:.3g} beyond L_max={L_max} exceeds "
            f"{tol:.3g} for rho={rho:.6g}; raise L_max"
        )


class NonFiniteLikelihoodError(AdoptionError):
    def __init__(self, block: str, sweep: int):
        self.block = block
        self.sweep = sweep
        super().__init__(
            f"non-finite values after updating the {block} block in sweep {sweep}"
        )


class DegenerateSplitError(AdoptionError):
    pass


class CheckpointError(AdoptionError):
    pass


class ShapeMismatchError(CheckpointError):
    def __init__(self, checkpoint_shape: Sequence[int], data_shape: Sequence[int]):
        super().__init__(
            f"checkpoint shape (N, M) = {tuple(checkpoint_shape)} does not match "
            f"dataset shape (N, M) = {tuple(data_shape)}"
        )


__all__ = [
    "AdoptionError",
    "DatasetError",
    "MalformedLineError",
    "UnknownUserError",
    "VisibilityTruncationError",
    "NonFiniteLikelihoodError",
    "DegenerateSplitError",
    "CheckpointError",
    "ShapeMismatchError",
]
