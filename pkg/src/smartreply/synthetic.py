"""Synthetic intent-labeled conversation generator.

Stands in for private training data: a configurable set of intents, each
with message templates and 2+ semantically distinct reply-template families,
sampled with a Zipf-like skew so head/torso/tail intents exist. Every
generated reply carries the label ``<intent>:<family>``, which downstream
evaluation uses as ground truth for duplicate/defect proxies.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .autodiff import Rng
from .corpus import DEFAULT_MAX_TOKENS, MessageReplyPair, make_pair
from .errors import ContractError

_SLOT_RE = re.compile(r"\{(\w+)\}")


@dataclass
class IntentTemplate:
    """One conversational intent: message surfaces and reply families."""

    name: str
    messages: list[str]
    replies: dict[str, list[str]]  # family name -> surface templates

    def validate(self) -> None:
        if not self.messages:
            raise ContractError(f"intent {self.name!r} has no message templates")
        if len(self.replies) < 2:
            raise ContractError(f"intent {self.name!r} needs >=2 reply families, has {len(self.replies)}")
        for family, templates in self.replies.items():
            if not templates:
                raise ContractError(f"intent {self.name!r} family {family!r} is empty")


@dataclass
class SyntheticConfig:
    intents: list[IntentTemplate]
    slots: dict[str, list[str]] = field(default_factory=dict)
    zipf_exponent: float = 1.0
    max_tokens: int = DEFAULT_MAX_TOKENS

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticConfig":
        intents = [
            IntentTemplate(name=i["name"], messages=list(i["messages"]), replies={k: list(v) for k, v in i["replies"].items()})
            for i in doc["intents"]
        ]
        return cls(
            intents=intents,
            slots={k: list(v) for k, v in doc.get("slots", {}).items()},
            zipf_exponent=float(doc.get("zipf_exponent", 1.0)),
            max_tokens=int(doc.get("max_tokens", DEFAULT_MAX_TOKENS)),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_config() -> SyntheticConfig:
    """The shipped desk-scale intent set (10 intents, 2-3 families each)."""
    doc = json.loads(resources.files("smartreply.data").joinpath("default_intents.json").read_text("utf-8"))
    return SyntheticConfig.from_dict(doc)


def _fill_slots(template: str, assignment: dict[str, str]) -> str:
    return _SLOT_RE.sub(lambda m: assignment[m.group(1)], template)


def _slot_assignment(templates: list[str], slots: dict[str, list[str]], rng: Rng) -> dict[str, str]:
    names = sorted({name for t in templates for name in _SLOT_RE.findall(t)})
    assignment = {}
    for name in names:
        fillers = slots.get(name)
        if not fillers:
            raise ContractError(f"no fillers configured for slot {{{name}}}")
        assignment[name] = fillers[rng.choice(len(fillers))]
    return assignment


def generate_synthetic(config: SyntheticConfig, n_pairs: int, seed: int) -> list[MessageReplyPair]:
    """Sample ``n_pairs`` labeled pairs, Zipf-skewed over intents.

    Deterministic for a fixed (config, n_pairs, seed). A shared slot
    assignment per pair keeps message and reply consistent (same {day},
    same {place}).
    """
    if n_pairs <= 0:
        raise ContractError(f"n_pairs must be positive, got {n_pairs}")
    if len(config.intents) < 5:
        raise ContractError(f"need >=5 intents configured, got {len(config.intents)}")
    for intent in config.intents:
        intent.validate()

    rng = Rng(seed)
    weights = [1.0 / (rank + 1) ** config.zipf_exponent for rank in range(len(config.intents))]
    total = sum(weights)
    probs_arr = np.asarray([w / total for w in weights])
    pairs: list[MessageReplyPair] = []
    while len(pairs) < n_pairs:
        intent = config.intents[rng.choice(len(config.intents), p=probs_arr)]
        message_t = intent.messages[rng.choice(len(intent.messages))]
        families = sorted(intent.replies)
        family = families[rng.choice(len(families))]
        reply_t = intent.replies[family][rng.choice(len(intent.replies[family]))]
        assignment = _slot_assignment([message_t, reply_t], config.slots, rng)
        pair = make_pair(
            _fill_slots(message_t, assignment),
            _fill_slots(reply_t, assignment),
            intent=f"{intent.name}:{family}",
            max_tokens=config.max_tokens,
        )
        if pair is not None:
            pairs.append(pair)
    return pairs
