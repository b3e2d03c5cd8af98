"""N-gram reply language model with interpolated absolute-discount backoff.

Used to score response specificity: frequent generic replies score high,
rare specific replies score low. The model is exact and auditable — counts
with begin/end markers, a fixed discount (D=0.75) reserving backoff mass at
each order, and a uniform floor over the event space under the unigram so
every sequence has finite log-probability.

Event space: all vocabulary ids except padding, plus the end-of-reply
marker. For any context the next-token probabilities sum to 1; a context
never seen at order n backs off with mass 1 to the order n-1 distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

DISCOUNT = 0.75


@dataclass
class LmScore:
    """Per-token mean (or summed) natural-log probability; always <= 0."""

    value: float


class NgramLm:
    """Count tables per order plus derived totals.

    ``vocab_size`` is the full vocabulary length including padding; the
    end marker gets id ``vocab_size`` and the begin marker (context only)
    ``vocab_size + 1``.
    """

    def __init__(self, order: int, vocab_size: int, discount: float = DISCOUNT) -> None:
        if order < 1:
            raise ContractError(f"order must be >= 1, got {order}")
        if vocab_size < 2:
            raise ContractError("vocabulary too small for a language model")
        self.order = order
        self.vocab_size = vocab_size
        self.discount = discount
        self.eos_id = vocab_size
        self.bos_id = vocab_size + 1
        # counts[k][context_tuple][next_id] for (k+1)-grams, k = 0..order-1
        self.counts: list[dict[tuple[int, ...], dict[int, int]]] = [{} for _ in range(order)]
        self._context_totals: list[dict[tuple[int, ...], int]] = [{} for _ in range(order)]

    # population of event ids: every non-pad vocab id plus EOS
    @property
    def event_count(self) -> int:
        return self.vocab_size  # ids 1..vocab_size-1 and eos

    def _observe(self, context: tuple[int, ...], token: int) -> None:
        k = len(context)
        table = self.counts[k].setdefault(context, {})
        table[token] = table.get(token, 0) + 1
        totals = self._context_totals[k]
        totals[context] = totals.get(context, 0) + 1

    def add_sequence(self, token_ids: list[int]) -> None:
        events = list(token_ids) + [self.eos_id]
        history = [self.bos_id] * (self.order - 1)
        for token in events:
            for k in range(self.order):
                context = tuple(history[-k:]) if k else ()
                self._observe(context, token)
            if self.order > 1:
                history = (history + [token])[-(self.order - 1):]

    def probability(self, context_ids: list[int], token: int) -> float:
        """P(token | context) under interpolated absolute discounting."""
        if self.order > 1:
            history = list(context_ids)[-(self.order - 1):]
            if len(history) < self.order - 1:
                history = [self.bos_id] * (self.order - 1 - len(history)) + history
        else:
            history = []
        return self._prob(tuple(history), token)

    def _prob(self, context: tuple[int, ...], token: int) -> float:
        k = len(context)
        if k == 0:
            table = self.counts[0].get((), {})
            total = self._context_totals[0].get((), 0)
            if total == 0:
                return 1.0 / self.event_count
            types = len(table)
            held = max(table.get(token, 0) - self.discount, 0.0) / total
            backoff_mass = self.discount * types / total
            return held + backoff_mass / self.event_count
        total = self._context_totals[k].get(context, 0)
        if total == 0:
            return self._prob(context[1:], token)
        table = self.counts[k][context]
        held = max(table.get(token, 0) - self.discount, 0.0) / total
        lam = self.discount * len(table) / total
        return held + lam * self._prob(context[1:], token)

    def next_token_distribution(self, context_ids: list[int]) -> np.ndarray:
        """Probabilities over the event space (index vocab_size = EOS)."""
        probs = np.empty(self.event_count, dtype=np.float64)
        events = list(range(1, self.vocab_size)) + [self.eos_id]
        for i, token in enumerate(events):
            probs[i] = self.probability(context_ids, token)
        return probs

    # ------------------------------------------------------------------
    # persistence

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "vocab_size": self.vocab_size,
            "discount": self.discount,
            "counts": [
                {" ".join(map(str, ctx)): dict(sorted((str(t), c) for t, c in table.items()))
                 for ctx, table in sorted(tables.items())}
                for tables in self.counts
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NgramLm":
        lm = cls(int(doc["order"]), int(doc["vocab_size"]), float(doc["discount"]))
        for k, tables in enumerate(doc["counts"]):
            for ctx_str, table in tables.items():
                ctx = tuple(int(x) for x in ctx_str.split()) if ctx_str else ()
                for token_str, count in table.items():
                    token = int(token_str)
                    lm.counts[k].setdefault(ctx, {})[token] = int(count)
                    lm._context_totals[k][ctx] = lm._context_totals[k].get(ctx, 0) + int(count)
        return lm

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str | Path) -> "NgramLm":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_lm(reply_ids: list[list[int]], order: int, vocab_size: int) -> NgramLm:
    if not reply_ids:
        raise ContractError("cannot train a language model on zero replies")
    lm = NgramLm(order=order, vocab_size=vocab_size)
    for ids in reply_ids:
        lm.add_sequence(ids)
    return lm


def lm_score(lm: NgramLm, token_ids: list[int], normalize: str = "mean") -> LmScore:
    """Log-probability of a reply including its end marker.

    ``normalize="mean"`` (default) divides by the number of scored events
    so specificity is not conflated with length; "sum" keeps the raw total.
    """
    if not token_ids:
        raise ContractError("cannot score an empty reply")
    if normalize not in ("mean", "sum"):
        raise ContractError(f"normalize must be 'mean' or 'sum', got {normalize!r}")
    events = list(token_ids) + [lm.eos_id]
    history = [lm.bos_id] * (lm.order - 1)
    total = 0.0
    for token in events:
        total += math.log(lm._prob(tuple(history), token))
        if lm.order > 1:
            history = (history + [token])[-(lm.order - 1):]
    value = total / len(events) if normalize == "mean" else total
    return LmScore(value=value)


def perplexity(lm: NgramLm, reply_ids: list[list[int]]) -> float:
    total, events = 0.0, 0
    for ids in reply_ids:
        if not ids:
            continue
        total += lm_score(lm, ids, normalize="sum").value
        events += len(ids) + 1
    return math.exp(-total / max(events, 1))
