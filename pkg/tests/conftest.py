"""Shared corpus builders and session-scoped trained fixtures."""

from __future__ import annotations

import pytest

from smartreply import corpus, matching, synthetic
from smartreply import encoder as enc


def two_intent_corpus(n_pairs: int = 640, seed: int = 3) -> list[corpus.MessageReplyPair]:
    """A separable toy corpus: two dominant intents whose replies echo the
    message's slot values, so every golden pair is uniquely linkable and the
    symmetric loss can approach zero."""
    cfg = synthetic.SyntheticConfig(
        intents=[
            synthetic.IntentTemplate(
                name="lunch",
                messages=["want to grab lunch at {place} on {day}?", "lunch at {place} this {day}?"],
                replies={
                    "accept": ["sure, {day} at {place} works", "count me in for {place} on {day}"],
                    "ask-time": ["what time on {day} at {place}?"],
                },
            ),
            synthetic.IntentTemplate(
                name="report",
                messages=["is the {doc} report due on {day}?", "status of the {doc} numbers for {day}?"],
                replies={
                    "done": ["the {doc} numbers for {day} are done", "finished the {doc} report for {day}"],
                    "delayed": ["{doc} for {day} is delayed"],
                },
            ),
            # filler intents so the generator contract (>=5) holds; tiny tail weight
            synthetic.IntentTemplate(
                name="bye", messages=["talk later {name}!"], replies={"bye": ["see you {name}!"], "wish": ["you too {name}!"]}
            ),
            synthetic.IntentTemplate(
                name="hi", messages=["hello there {name}"], replies={"hi": ["hey hello {name}"], "ask": ["how are you {name}?"]}
            ),
            synthetic.IntentTemplate(
                name="thanks", messages=["thank you {name}"], replies={"wc": ["welcome {name}"], "more": ["anytime {name}"]}
            ),
        ],
        slots={
            "day": ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday"],
            "place": ["the cafe", "the deli", "the corner spot", "the food hall"],
            "doc": ["budget", "sales", "hiring", "roadmap", "travel"],
            "name": ["sam", "alex", "jamie", "pat", "ricky", "morgan"],
        },
        zipf_exponent=2.0,
    )
    return synthetic.generate_synthetic(cfg, n_pairs, seed=seed)


def quick_train_config(seed: int = 0, epochs: int = 16, batch_size: int = 32) -> matching.TrainConfig:
    return matching.TrainConfig(
        batch_size=batch_size,
        epochs=epochs,
        seed=seed,
        encoder=enc.EncoderConfig(embed_size=32, hidden=32),
    )


@pytest.fixture(scope="session")
def tiny_stack():
    """A full trained stack (model, lm, artifact, cvae) shared across tests."""
    from smartreply import evaluation, inference, mcvae, ngram_lm

    pairs = synthetic.generate_synthetic(synthetic.default_config(), 6000, seed=101)
    train, val = corpus.split_pairs(pairs, 0.1, seed=101)
    vocab = corpus.build_vocabulary(pairs, min_frequency=2)
    cfg = matching.TrainConfig(
        batch_size=64, epochs=4, seed=11, encoder=enc.EncoderConfig(embed_size=32, hidden=32)
    )
    model, history = matching.train_matching(train, val, vocab, cfg)
    lm = ngram_lm.train_lm([vocab.encode(p.reply) for p in train], order=3, vocab_size=len(vocab))
    artifact = inference.build_response_set(
        [p.raw_reply for p in train], model, lm, freq_top=400, lm_top=200
    )
    cvae_cfg = mcvae.CvaeConfig(z_dim=16, hidden=64, epochs=8, batch_size=64, seed=5, lr=1.0, kl_weight=0.5)
    cvae_params, cvae_history = mcvae.train_cvae(model, train, val, cvae_cfg)
    engine = inference.SuggestEngine(model=model, artifact=artifact, cvae=cvae_params)
    return {
        "model": model,
        "history": history,
        "pairs": pairs,
        "train": train,
        "val": val,
        "vocab": vocab,
        "lm": lm,
        "artifact": artifact,
        "cvae": cvae_params,
        "cvae_config": cvae_cfg,
        "cvae_history": cvae_history,
        "engine": engine,
        "label_map": evaluation.LabelMap.from_pairs(pairs),
    }
