"""Desk-scale quality proxies standing in for human judgment.

Synthetic corpora label every reply ``<message-intent>:<reply-family>``,
which supports two proxies over a ranker's top-3:

* duplicate rate: fraction of eval messages where at least two suggestions
  share a lexical cluster or a ground-truth label,
* defect rate: fraction where the top suggestion carries no label whose
  message-intent prefix matches the eval message's intent.

Intent coverage counts distinct primary labels in the top-3 (a response's
primary label is its most frequent label in the corpus). Ranker specs take
an optional ``-nolc`` suffix to measure raw, pre-dedup suggestions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .corpus import MessageReplyPair
from .autodiff import Rng
from .errors import ContractError
from .inference import SuggestEngine, Suggestion

log = logging.getLogger(__name__)


@dataclass
class LabelMap:
    """Reply text -> ground-truth label set, plus a primary label each."""

    labels: dict[str, set[str]]
    primary: dict[str, str]

    @classmethod
    def from_pairs(cls, pairs: list[MessageReplyPair]) -> "LabelMap":
        counts: dict[str, dict[str, int]] = {}
        for pair in pairs:
            if pair.intent is None:
                continue
            per_text = counts.setdefault(pair.raw_reply, {})
            per_text[pair.intent] = per_text.get(pair.intent, 0) + 1
        labels = {text: set(c) for text, c in counts.items()}
        primary = {text: min(c, key=lambda lab: (-c[lab], lab)) for text, c in counts.items()}
        return cls(labels=labels, primary=primary)


@dataclass
class EvalMessage:
    text: str
    intent: str  # message-intent name


def eval_messages_from_pairs(pairs: list[MessageReplyPair], n: int, seed: int) -> list[EvalMessage]:
    """Distinct labeled eval messages sampled from held-out pairs."""
    seen: dict[str, str] = {}
    for pair in pairs:
        if pair.intent is None:
            continue
        seen.setdefault(pair.raw_message, pair.message_intent)
    texts = sorted(seen)
    if not texts:
        raise ContractError("no labeled messages to evaluate on")
    order = Rng(seed).permutation(len(texts))
    picked = [texts[i] for i in order[: min(n, len(texts))]]
    return [EvalMessage(text=t, intent=seen[t]) for t in picked]


@dataclass
class RankerEval:
    ranker: str
    duplicate_rate: float
    defect_rate: float
    intent_coverage: float
    n_messages: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    rows: dict[str, RankerEval]
    baseline: str
    relative: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "rows": {name: row.to_dict() for name, row in self.rows.items()},
            "relative": self.relative,
        }


def _shares_ground_truth(a: Suggestion, b: Suggestion, label_map: LabelMap) -> bool:
    la = label_map.labels.get(a.text, set())
    lb = label_map.labels.get(b.text, set())
    return bool(la & lb)


def _is_duplicate_triple(suggestions: list[Suggestion], label_map: LabelMap) -> bool:
    for i in range(len(suggestions)):
        for j in range(i + 1, len(suggestions)):
            a, b = suggestions[i], suggestions[j]
            if a.cluster_id == b.cluster_id:
                return True
            if _shares_ground_truth(a, b, label_map):
                return True
    return False


def _is_defect(top: Suggestion, message_intent: str, label_map: LabelMap) -> bool:
    labels = label_map.labels.get(top.text)
    if not labels:
        return True  # response never observed with a label: incompatible
    return not any(label.split(":", 1)[0] == message_intent for label in labels)


def _coverage(suggestions: list[Suggestion], label_map: LabelMap) -> int:
    primaries = {label_map.primary.get(s.text, f"?{s.response_id}") for s in suggestions}
    return len(primaries)


def parse_ranker_spec(spec: str) -> tuple[str, bool]:
    """"mcvae-nolc" -> ("mcvae", use_lc=False)."""
    if spec.endswith("-nolc"):
        return spec[: -len("-nolc")], False
    return spec, True


def evaluate(
    engine: SuggestEngine,
    messages: list[EvalMessage],
    label_map: LabelMap,
    ranker_specs: list[str],
    overrides: dict | None = None,
) -> EvalReport:
    """Per-ranker proxies plus relative deltas against the matching row."""
    if not messages:
        raise ContractError("no eval messages")
    rows: dict[str, RankerEval] = {}
    for spec in ranker_specs:
        ranker, use_lc = parse_ranker_spec(spec)
        spec_overrides = dict(overrides or {}, use_lc=use_lc)
        duplicates = defects = 0
        coverage_total = 0
        for message in messages:
            result = engine.suggest(message.text, ranker, spec_overrides)
            if not result.suggestions:
                raise ContractError(f"ranker {spec} produced no suggestions for {message.text!r}")
            if _is_duplicate_triple(result.suggestions, label_map):
                duplicates += 1
            if _is_defect(result.suggestions[0], message.intent, label_map):
                defects += 1
            coverage_total += _coverage(result.suggestions, label_map)
        n = len(messages)
        rows[spec] = RankerEval(
            ranker=spec,
            duplicate_rate=duplicates / n,
            defect_rate=defects / n,
            intent_coverage=coverage_total / n,
            n_messages=n,
        )

    baseline_name = "matching" if "matching" in rows else next(iter(rows))
    base = rows[baseline_name]
    relative = {}
    for name, row in rows.items():
        dup_delta = (
            (row.duplicate_rate - base.duplicate_rate) / base.duplicate_rate
            if base.duplicate_rate > 0
            else 0.0
        )
        relative[name] = {
            "duplicate_rate_rel_change": dup_delta,
            "defect_rate_abs_change": row.defect_rate - base.defect_rate,
            "intent_coverage_abs_change": row.intent_coverage - base.intent_coverage,
        }
    return EvalReport(rows=rows, baseline=baseline_name, relative=relative)
