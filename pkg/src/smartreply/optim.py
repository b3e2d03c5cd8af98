"""Adadelta parameter updates (Zeiler-style accumulators)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor


class Adadelta:
    """Per-parameter Adadelta state over a fixed tensor list.

    Updates mutate ``param.data`` in place; the tensors must be the same
    objects the forward pass reads on the next step. Deterministic given a
    deterministic gradient sequence.
    """

    def __init__(self, params: Sequence[Tensor], rho: float = 0.95, eps: float = 1e-6, lr: float = 1.0) -> None:
        # dedupe by identity: shared embeddings must not be updated twice
        seen: set[int] = set()
        self.params: list[Tensor] = []
        for p in params:
            if id(p) not in seen:
                seen.add(id(p))
                self.params.append(p)
        self.rho = rho
        self.eps = eps
        self.lr = lr
        self._sq_grad = [np.zeros_like(p.data) for p in self.params]
        self._sq_delta = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        for p, g, eg, ed in zip(self.params, grads, self._sq_grad, self._sq_delta):
            eg *= self.rho
            eg += (1.0 - self.rho) * g * g
            delta = -np.sqrt(ed + self.eps) / np.sqrt(eg + self.eps) * g
            ed *= self.rho
            ed += (1.0 - self.rho) * delta * delta
            p.data += (self.lr * delta).astype(p.data.dtype)
