"""Exception types shared across the package."""

from __future__ import annotations


class ContractError(ValueError):
    """A caller violated a documented precondition."""


class DimensionError(ContractError):
    """Tensor shapes are incompatible for the requested op."""


class NumericsError(RuntimeError):
    """A forward value became NaN/Inf; never silently propagated."""


class TrainingDiverged(NumericsError):
    """Loss became non-finite during training."""

    def __init__(self, message: str, epoch: int, step: int) -> None:
        super().__init__(f"{message} (epoch {epoch}, step {step})")
        self.epoch = epoch
        self.step = step


class PersistenceError(RuntimeError):
    """A model container could not be written or read back."""
