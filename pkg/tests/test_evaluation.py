"""Duplicate/defect proxies and the ranker comparison report."""

from __future__ import annotations

import numpy as np
import pytest

from smartreply import evaluation, inference
from smartreply.autodiff import Rng
from smartreply.corpus import make_pair
from smartreply.errors import ContractError


def _suggestion(text, cluster_id, response_id=0):
    return inference.Suggestion(
        text=text, response_id=response_id, cluster_id=cluster_id, raw_score=0.0, softmax_score=0.3
    )


def _label_map():
    pairs = [
        make_pair("lunch?", "sure", intent="lunch:accept"),
        make_pair("lunch?", "sure", intent="lunch:accept"),
        make_pair("meet?", "sure", intent="meeting:accept"),
        make_pair("lunch?", "what time?", intent="lunch:ask-time"),
        make_pair("report?", "done", intent="status:done"),
    ]
    return evaluation.LabelMap.from_pairs(pairs)


def test_label_map_sets_and_primary():
    lm = _label_map()
    assert lm.labels["sure"] == {"lunch:accept", "meeting:accept"}
    assert lm.primary["sure"] == "lunch:accept"  # higher count wins
    assert lm.labels["done"] == {"status:done"}


def test_duplicate_by_cluster_and_by_intent():
    lm = _label_map()
    by_cluster = [_suggestion("sure", 1), _suggestion("done", 1), _suggestion("what time?", 2)]
    assert evaluation._is_duplicate_triple(by_cluster, lm)
    by_intent = [_suggestion("sure", 1), _suggestion("sure", 2), _suggestion("done", 3)]
    assert evaluation._is_duplicate_triple(by_intent, lm)
    clean = [_suggestion("sure", 1), _suggestion("what time?", 2), _suggestion("done", 3)]
    assert not evaluation._is_duplicate_triple(clean, lm)


def test_defect_uses_message_intent_prefix():
    lm = _label_map()
    assert not evaluation._is_defect(_suggestion("sure", 1), "lunch", lm)
    assert not evaluation._is_defect(_suggestion("sure", 1), "meeting", lm)
    assert evaluation._is_defect(_suggestion("done", 1), "lunch", lm)
    assert evaluation._is_defect(_suggestion("unlabeled text", 1), "lunch", lm)


def test_coverage_counts_distinct_primary_labels():
    lm = _label_map()
    triple = [_suggestion("sure", 1), _suggestion("what time?", 2), _suggestion("done", 3)]
    assert evaluation._coverage(triple, lm) == 3
    twice = [_suggestion("sure", 1), _suggestion("sure", 2)]
    assert evaluation._coverage(twice, lm) == 1


def test_eval_messages_distinct_and_labeled(tiny_stack):
    messages = evaluation.eval_messages_from_pairs(tiny_stack["val"], 40, seed=1)
    texts = [m.text for m in messages]
    assert len(texts) == len(set(texts)) == 40
    assert all(m.intent for m in messages)


def test_report_rates_bounded_and_self_delta_zero(tiny_stack):
    messages = evaluation.eval_messages_from_pairs(tiny_stack["val"], 30, seed=2)
    report = evaluation.evaluate(
        tiny_stack["engine"], messages, tiny_stack["label_map"], ["matching", "mmr"]
    )
    for row in report.rows.values():
        assert 0.0 <= row.duplicate_rate <= 1.0
        assert 0.0 <= row.defect_rate <= 1.0
        assert 1.0 <= row.intent_coverage <= 3.0
    self_rel = report.relative["matching"]
    assert self_rel["duplicate_rate_rel_change"] == 0.0
    assert self_rel["defect_rate_abs_change"] == 0.0
    assert self_rel["intent_coverage_abs_change"] == 0.0


def test_mcvae_duplicates_strictly_below_matching_nolc(tiny_stack):
    messages = evaluation.eval_messages_from_pairs(tiny_stack["val"], 60, seed=3)
    report = evaluation.evaluate(
        tiny_stack["engine"], messages, tiny_stack["label_map"], ["matching-nolc", "mcvae-nolc"]
    )
    assert (
        report.rows["mcvae-nolc"].duplicate_rate < report.rows["matching-nolc"].duplicate_rate
    ), report.to_dict()


def test_mmr_beta_sweep_duplicates_non_increasing_in_novelty_weight(tiny_stack):
    """On a constructed duplicate-heavy artifact, more novelty weight never
    adds duplicates (sweep oracle over beta)."""
    model = tiny_stack["model"]
    d = tiny_stack["artifact"].dim
    rng = Rng(5)
    u = rng.standard_normal(d); u /= np.linalg.norm(u)
    v = rng.standard_normal(d); v -= (v @ u) * u; v /= np.linalg.norm(v)
    w = rng.standard_normal(d); w -= (w @ u) * u + (w @ v) * v; w /= np.linalg.norm(w)
    # duplicate-heavy: two clusters of near-identical responses plus singles
    phi = np.stack([u, u * 0.99 + v * 0.01, u, v, v * 0.99 + w * 0.01, w]).astype(np.float32)
    artifact = inference.ResponseSetArtifact(
        responses=["dup a1", "dup a2", "dup a3", "dup b1", "dup b2", "other"],
        phi_y=phi,
        lm_scores=np.zeros(6, dtype=np.float32),
        cluster_ids=np.array([0, 0, 0, 1, 1, 2]),
    )
    label_map = evaluation.LabelMap.from_pairs(
        [make_pair("m", t, intent=f"x:{t}") for t in artifact.responses]
    )
    engine = inference.SuggestEngine(model=model, artifact=artifact)
    messages = [evaluation.EvalMessage(text=t, intent="x") for t in
                ("lunch tomorrow?", "how are you?", "status of the report?", "thanks!")]
    rates = []
    for beta in (1.0, 0.8, 0.6, 0.4, 0.2, 0.0):
        report = evaluation.evaluate(
            engine, messages, label_map, ["mmr-nolc"], overrides={"beta": beta, "k": 6, "alpha": 0.0}
        )
        rates.append(report.rows["mmr-nolc"].duplicate_rate)
    assert all(later <= earlier + 1e-12 for earlier, later in zip(rates, rates[1:])), rates


def test_evaluate_rejects_empty_inputs(tiny_stack):
    with pytest.raises(ContractError):
        evaluation.evaluate(tiny_stack["engine"], [], tiny_stack["label_map"], ["matching"])
