"""Command-line lifecycle: generate, train, build, evaluate, serve.

Every subcommand accepts ``--config FILE`` (JSON whose keys mirror the
flag names); explicit flags override config values, which override built-in
defaults. Exit codes: 0 success, 1 contract/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import benchmark, corpus, evaluation, inference, matching, mcvae, ngram_lm, persistence, service, synthetic
from . import encoder as enc
from .errors import ContractError, NumericsError, PersistenceError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); the contract is 1
        raise _UsageError(message)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ContractError("config file must hold a JSON object")
    return doc


def _opt(args, config: dict, name: str, default):
    """Flag > config > default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


def _write_json(path: str | None, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _split_corpus(args, config, path: str):
    pairs = corpus.read_pairs_tsv(path)
    if not pairs:
        raise ContractError(f"no usable pairs in {path}")
    fraction = float(_opt(args, config, "val-fraction", 0.1))
    split_seed = int(_opt(args, config, "split-seed", 0))
    train, val = corpus.split_pairs(pairs, fraction, seed=split_seed)
    return pairs, train, val


def _load_engine(args, config) -> inference.SuggestEngine:
    model, cvae_params, container = persistence.load_full(args.model)
    artifact = inference.load_artifact(args.artifact)
    defaults = inference.PipelineConfig(alpha=model.config.alpha, k=model.config.k)
    for name in ("alpha", "beta", "k", "samples", "seed"):
        value = _opt(args, config, name, None)
        if value is not None:
            setattr(defaults, name, value)
    defaults.validate()
    return inference.SuggestEngine(
        model=model,
        artifact=artifact,
        cvae=cvae_params,
        defaults=defaults,
        model_hash=persistence.container_hash(container),
    )


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_corpus(args) -> int:
    config = _load_config(args.config)
    n_pairs = int(_opt(args, config, "n-pairs", 50_000))
    seed = int(_opt(args, config, "seed", 1))
    synth_config = (
        synthetic.SyntheticConfig.from_dict(config["generator"])
        if "generator" in config
        else synthetic.default_config()
    )
    if "zipf-exponent" in config or args.zipf_exponent is not None:
        synth_config.zipf_exponent = float(_opt(args, config, "zipf-exponent", synth_config.zipf_exponent))
    pairs = synthetic.generate_synthetic(synth_config, n_pairs, seed=seed)
    corpus.write_pairs_tsv(args.out, pairs)
    print(json.dumps({"pairs": len(pairs), "out": args.out, "seed": seed}))
    return 0


def cmd_train_matching(args) -> int:
    config = _load_config(args.config)
    _, train, val = _split_corpus(args, config, args.corpus)
    vocab = corpus.build_vocabulary(train + val, min_frequency=int(_opt(args, config, "min-frequency", 2)))
    train_config = matching.TrainConfig.from_dict(config["train"]) if "train" in config else matching.TrainConfig()
    for name, caster in (("epochs", int), ("batch-size", int), ("seed", int), ("lr", float)):
        value = _opt(args, config, name, None)
        if value is not None:
            setattr(train_config, name.replace("-", "_"), caster(value))
    for name, caster in (("embed-size", int), ("hidden", int), ("layers", int), ("variant", str)):
        value = _opt(args, config, name, None)
        if value is not None:
            setattr(train_config.encoder, name.replace("-", "_"), caster(value))
    if args.no_share_embedding:
        train_config.share_embedding = False
    model, history = matching.train_matching(train, val, vocab, train_config)
    container = persistence.matching_to_container(
        model, extra_metadata={"corpus_sha256": _sha256_file(args.corpus)}
    )
    persistence.save_model(args.out, container)
    print(json.dumps({
        "out": args.out,
        "vocab": len(vocab),
        "val_loss": history["val_loss"],
        "best_val_loss": history["best_val_loss"],
        "model_hash": persistence.container_hash(container),
    }))
    return 0


def cmd_train_lm(args) -> int:
    config = _load_config(args.config)
    model, _, _ = persistence.load_full(args.model)
    pairs = corpus.read_pairs_tsv(args.corpus)
    order = int(_opt(args, config, "order", 3))
    lm = ngram_lm.train_lm(
        [model.vocab.encode(p.reply) for p in pairs], order=order, vocab_size=len(model.vocab)
    )
    lm.save(args.out)
    print(json.dumps({"out": args.out, "order": order, "replies": len(pairs)}))
    return 0


def cmd_build_response_set(args) -> int:
    config = _load_config(args.config)
    model, _, container = persistence.load_full(args.model)
    lm = ngram_lm.NgramLm.load(args.lm)
    _, train, _ = _split_corpus(args, config, args.corpus)
    blocked = list(config.get("blocklist", []))
    if args.blocklist:
        blocked += json.loads(Path(args.blocklist).read_text("utf-8"))
    kept = corpus.apply_blocklist(train, blocked)
    artifact = inference.build_response_set(
        [p.raw_reply for p in kept],
        model,
        lm,
        freq_top=int(_opt(args, config, "freq-top", 2000)),
        lm_top=int(_opt(args, config, "lm-top", 500)),
    )
    srm_path, manifest_path = inference.save_artifact(args.out, artifact)
    print(json.dumps({
        "srm": str(srm_path),
        "manifest": str(manifest_path),
        "responses": artifact.size,
        "counts": artifact.metadata["counts"],
    }))
    return 0


def cmd_train_cvae(args) -> int:
    config = _load_config(args.config)
    model, _, container = persistence.load_full(args.model)
    _, train, val = _split_corpus(args, config, args.corpus)
    cvae_config = mcvae.CvaeConfig.from_dict(config["cvae"]) if "cvae" in config else mcvae.CvaeConfig()
    for name, caster in (
        ("z-dim", int), ("hidden", int), ("epochs", int), ("batch-size", int),
        ("seed", int), ("kl-weight", float), ("kl-anneal-steps", int), ("lr", float),
    ):
        value = _opt(args, config, name, None)
        if value is not None:
            setattr(cvae_config, name.replace("-", "_"), caster(value))
    params, history = mcvae.train_cvae(model, train, val, cvae_config)
    persistence.attach_cvae(container, params, cvae_config)
    persistence.save_model(args.out, container)
    print(json.dumps({
        "out": args.out,
        "val_loss": history["val_loss"],
        "best_val_loss": history["best_val_loss"],
        "kl": history["kl"],
        "collapsed": history["collapsed"],
    }))
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    engine = _load_engine(args, config)
    pairs, _, val = _split_corpus(args, config, args.corpus)
    label_map = evaluation.LabelMap.from_pairs(pairs)
    messages = evaluation.eval_messages_from_pairs(
        val, int(_opt(args, config, "n-messages", 200)), seed=int(_opt(args, config, "eval-seed", 3))
    )
    specs = [s.strip() for s in _opt(args, config, "rankers", "matching,mmr,mcvae").split(",") if s.strip()]
    report = evaluation.evaluate(engine, messages, label_map, specs)
    _write_json(args.out, report.to_dict())
    return 0


def cmd_bench(args) -> int:
    config = _load_config(args.config)
    engine = _load_engine(args, config)
    pairs, _, val = _split_corpus(args, config, args.corpus)
    messages = [
        m.text
        for m in evaluation.eval_messages_from_pairs(
            val, int(_opt(args, config, "n-messages", 50)), seed=int(_opt(args, config, "eval-seed", 3))
        )
    ]
    bench_config = benchmark.BenchConfig(
        warmup=int(_opt(args, config, "warmup", benchmark.MIN_WARMUP)),
        queries=int(_opt(args, config, "queries", benchmark.MIN_QUERIES)),
        pipeline=engine.defaults,
    )
    report = benchmark.bench(engine, messages, bench_config)
    _write_json(args.out, report.to_dict())
    return 0


def cmd_suggest(args) -> int:
    config = _load_config(args.config)
    engine = _load_engine(args, config)
    result = engine.suggest(args.message, args.ranker)
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    config = _load_config(args.config)
    engine = _load_engine(args, config)
    service.serve(
        engine,
        click_log_path=_opt(args, config, "click-log", "clicks.jsonl"),
        host=str(_opt(args, config, "host", "127.0.0.1")),
        port=int(_opt(args, config, "port", 8080)),
        static_dir=_opt(args, config, "static", None),
    )
    return 0


# --------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="smartreply", description="Retrieval smart-reply engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="JSON config; flags override its keys")
        return p

    p = add("gen-corpus", cmd_gen_corpus, help="generate a synthetic labeled corpus TSV")
    p.add_argument("--out", required=True)
    p.add_argument("--n-pairs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--zipf-exponent", type=float)

    p = add("train-matching", cmd_train_matching, help="train the dual-encoder matching model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--embed-size", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--variant", choices=[enc.BI_RECURRENT, enc.FEED_FORWARD])
    p.add_argument("--min-frequency", type=int)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--no-share-embedding", action="store_true")

    p = add("train-lm", cmd_train_lm, help="train the n-gram reply language model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--order", type=int)
    p.add_argument("--out", required=True)

    p = add("build-response-set", cmd_build_response_set, help="build the response-set artifact")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--freq-top", type=int)
    p.add_argument("--lm-top", type=int)
    p.add_argument("--blocklist", help="JSON file with a list of banned substrings")
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--split-seed", type=int)

    p = add("train-cvae", cmd_train_cvae, help="train CVAE layers over a frozen model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--z-dim", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--kl-weight", type=float)
    p.add_argument("--kl-anneal-steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--split-seed", type=int)

    def add_pipeline_flags(p):
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--k", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int)

    p = add("eval", cmd_eval, help="compute duplicate/defect proxies per ranker")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--artifact", required=True)
    p.add_argument("--rankers")
    p.add_argument("--n-messages", type=int)
    p.add_argument("--eval-seed", type=int)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--out")
    add_pipeline_flags(p)

    p = add("bench", cmd_bench, help="latency benchmark across rankers")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--artifact", required=True)
    p.add_argument("--queries", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--n-messages", type=int)
    p.add_argument("--eval-seed", type=int)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--out")
    add_pipeline_flags(p)

    p = add("suggest", cmd_suggest, help="one-off suggestion to stdout")
    p.add_argument("--model", required=True)
    p.add_argument("--artifact", required=True)
    p.add_argument("--message", required=True)
    p.add_argument("--ranker", default="matching")
    add_pipeline_flags(p)

    p = add("serve", cmd_serve, help="run the HTTP suggestion service")
    p.add_argument("--model", required=True)
    p.add_argument("--artifact", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--click-log")
    p.add_argument("--static")
    add_pipeline_flags(p)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (ContractError, NumericsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, PersistenceError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
