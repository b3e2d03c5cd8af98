"""Tokenization, vocabulary, and message-reply pair ingestion.

The tokenizer is rule-based: lowercase, whitespace-delimited, punctuation
split off as standalone tokens. Apostrophes stay word-internal so "can't"
is one token. Pairs round-trip through UTF-8 TSV files, one pair per line:
``message \\t reply [\\t intent]``.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .autodiff import Rng
from .errors import ContractError

log = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

DEFAULT_MAX_TOKENS = 30

_TOKEN_RE = re.compile(r"\w+(?:'\w+)*|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercased word/punctuation tokens; empty list for empty text."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


@dataclass
class MessageReplyPair:
    """One (message, reply) example, optionally intent-labeled.

    ``intent`` is the reply's ground-truth label on synthetic corpora,
    formatted ``<message-intent>:<reply-family>``. Raw texts keep the
    original casing/punctuation for response-set display.
    """

    message: list[str]
    reply: list[str]
    intent: str | None = None
    raw_message: str = ""
    raw_reply: str = ""

    @property
    def message_intent(self) -> str | None:
        if self.intent is None:
            return None
        return self.intent.split(":", 1)[0]


def make_pair(
    raw_message: str,
    raw_reply: str,
    intent: str | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> MessageReplyPair | None:
    """Tokenize raw texts into a pair; None if either side tokenizes empty."""
    message = tokenize(raw_message)[:max_tokens]
    reply = tokenize(raw_reply)[:max_tokens]
    if not message or not reply:
        return None
    return MessageReplyPair(message, reply, intent, raw_message, raw_reply)


@dataclass
class Vocabulary:
    """Frozen surface<->id mapping. Id 0 is padding, id 1 is unknown.

    Ids are assigned frequency-descending with lexicographic tie-break, so a
    rebuilt vocabulary over the same corpus is identical.
    """

    surfaces: list[str]
    frequencies: dict[str, int]
    min_frequency: int
    _index: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not self._index:
            self._index = {s: i for i, s in enumerate(self.surfaces)}

    def __len__(self) -> int:
        return len(self.surfaces)

    def lookup(self, surface: str) -> int:
        return self._index.get(surface, UNK_ID)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.surfaces[i] for i in ids]


def build_vocabulary(pairs: list[MessageReplyPair], min_frequency: int = 2) -> Vocabulary:
    if not pairs:
        raise ContractError("cannot build a vocabulary from zero pairs")
    freqs: dict[str, int] = {}
    for pair in pairs:
        for token in pair.message:
            freqs[token] = freqs.get(token, 0) + 1
        for token in pair.reply:
            freqs[token] = freqs.get(token, 0) + 1
    kept = [t for t, c in freqs.items() if c >= min_frequency]
    kept.sort(key=lambda t: (-freqs[t], t))
    surfaces = [PAD_TOKEN, UNK_TOKEN] + kept
    return Vocabulary(surfaces=surfaces, frequencies=freqs, min_frequency=min_frequency)


def split_pairs(
    pairs: list[MessageReplyPair], validation_fraction: float, seed: int
) -> tuple[list[MessageReplyPair], list[MessageReplyPair]]:
    """Disjoint, exhaustive, seed-deterministic train/validation split."""
    if not 0.0 < validation_fraction < 1.0:
        raise ContractError(f"validation_fraction must be in (0, 1), got {validation_fraction}")
    n = len(pairs)
    n_val = int(round(n * validation_fraction))
    perm = Rng(seed).permutation(n)
    val_idx = set(perm[:n_val].tolist())
    train = [pairs[i] for i in range(n) if i not in val_idx]
    val = [pairs[i] for i in range(n) if i in val_idx]
    return train, val


def apply_blocklist(pairs: list[MessageReplyPair], blocked_terms: list[str]) -> list[MessageReplyPair]:
    """Drop pairs whose reply contains any blocked term (case-insensitive)."""
    if not blocked_terms:
        return list(pairs)
    lowered = [t.lower() for t in blocked_terms]
    kept = [p for p in pairs if not any(term in p.raw_reply.lower() for term in lowered)]
    if len(kept) < len(pairs):
        log.info("blocklist removed %d pairs", len(pairs) - len(kept))
    return kept


# --------------------------------------------------------------------------
# TSV ingestion


def _clean_field(text: str) -> str:
    return re.sub(r"[\t\n\r]+", " ", text).strip()


def write_pairs_tsv(path: str | Path, pairs: list[MessageReplyPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            row = [_clean_field(pair.raw_message or detokenize(pair.message)),
                   _clean_field(pair.raw_reply or detokenize(pair.reply))]
            if pair.intent is not None:
                row.append(pair.intent)
            fh.write("\t".join(row) + "\n")


def read_pairs_tsv(path: str | Path, max_tokens: int = DEFAULT_MAX_TOKENS) -> list[MessageReplyPair]:
    pairs: list[MessageReplyPair] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                skipped += 1
                continue
            intent = cols[2] if len(cols) > 2 and cols[2] else None
            pair = make_pair(cols[0], cols[1], intent, max_tokens=max_tokens)
            if pair is None:
                skipped += 1
                continue
            pairs.append(pair)
    if skipped:
        log.warning("skipped %d malformed/empty lines in %s", skipped, path)
    return pairs
