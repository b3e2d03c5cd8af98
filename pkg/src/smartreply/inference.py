"""Response-set artifact and the end-to-end suggestion pipelines.

Artifact build: take the reply corpus, keep the ``freq_top`` most frequent
distinct texts, then the ``lm_top`` best by language-model score, and
precompute everything inference needs (encoded vectors, lm scores, lexical
cluster ids).

Three rankers produce suggestions:

* matching: encode, score against the response matrix, de-duplicate, top 3.
* mmr: matching top-K re-ranked by novelty-penalized scores first.
* mcvae: matching top-K (or MMR-preselected from top-2K) candidates feed
  constrained sampling — all latent samples decode in one batched pass and
  vote for their nearest candidate; votes rank the final list.

Every ranker reports per-stage microsecond timings.
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diversify, persistence
from .autodiff import Rng
from .corpus import tokenize
from .diversify import LexicalClusters
from .errors import ContractError
from .matching import MatchingModel, MatchScores, match_score
from .mcvae import CvaeParams, decode_np
from .ngram_lm import NgramLm, lm_score

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Runtime knobs; ``k`` is the pruning size, ``samples`` the vote count."""

    alpha: float = 0.1
    beta: float = 0.5
    k: int = 15
    samples: int = 300
    use_mmr_preselect: bool = False
    vote_lm_alpha: bool = False  # apply alpha to the lm term inside voting
    use_lc: bool = True  # False: skip dedup (evaluation measures raw top-3)
    seed: int = 0
    limit: int = 3

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.k < 3:
            raise ContractError(f"k must be >= 3, got {self.k}")
        if self.samples < 1:
            raise ContractError(f"samples must be >= 1, got {self.samples}")
        if not 0.0 <= self.beta <= 1.0:
            raise ContractError(f"beta must be in [0, 1], got {self.beta}")
        if self.alpha < 0:
            raise ContractError(f"alpha must be >= 0, got {self.alpha}")
        if self.limit < 1:
            raise ContractError(f"limit must be >= 1, got {self.limit}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        return cls(**doc)


@dataclass
class ResponseSetArtifact:
    """Frozen response texts plus everything precomputed for inference."""

    responses: list[str]
    phi_y: np.ndarray  # [R, d] float32
    lm_scores: np.ndarray  # [R] float32
    cluster_ids: np.ndarray  # [R] int64
    metadata: dict = field(default_factory=dict)
    _clusters: LexicalClusters | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        n = len(self.responses)
        if not (self.phi_y.shape[0] == n and len(self.lm_scores) == n and len(self.cluster_ids) == n):
            raise ContractError(
                f"artifact arrays disagree: {n} texts, {self.phi_y.shape[0]} vectors, "
                f"{len(self.lm_scores)} lm scores, {len(self.cluster_ids)} cluster ids"
            )
        if not np.isfinite(self.phi_y).all():
            raise ContractError("artifact vectors contain non-finite values")

    @property
    def size(self) -> int:
        return len(self.responses)

    @property
    def dim(self) -> int:
        return self.phi_y.shape[1]

    @property
    def clusters(self) -> LexicalClusters:
        if self._clusters is None:
            self._clusters = diversify.clusters_from_ids(self.cluster_ids)
        return self._clusters


def build_response_set(
    reply_texts: list[str],
    model: MatchingModel,
    lm: NgramLm,
    freq_top: int = 2000,
    lm_top: int = 500,
    synonyms: dict[str, str] | None = None,
    contractions: dict[str, str] | None = None,
    extra_metadata: dict | None = None,
) -> ResponseSetArtifact:
    """Frequency cut, lm cut, then precompute vectors/scores/clusters.

    Deterministic for fixed inputs: ties break lexicographically, and no
    wall-clock metadata is injected, so a rebuild is byte-identical.
    """
    if not reply_texts:
        raise ContractError("cannot build a response set from zero replies")
    counts: dict[str, int] = {}
    for text in reply_texts:
        counts[text] = counts.get(text, 0) + 1
    distinct = len(counts)
    if freq_top > distinct:
        log.warning("freq_top %d exceeds %d distinct replies; keeping all", freq_top, distinct)
    by_frequency = sorted(counts, key=lambda t: (-counts[t], t))[:freq_top]

    scored: list[tuple[str, float]] = []
    for text in by_frequency:
        ids = model.vocab.encode(tokenize(text))
        scored.append((text, lm_score(lm, ids).value))
    if lm_top > len(scored):
        log.warning("lm_top %d exceeds %d candidates; keeping all", lm_top, len(scored))
    scored.sort(key=lambda item: (-item[1], item[0]))
    survivors = [text for text, _ in scored[:lm_top]]

    token_ids = [model.vocab.encode(tokenize(t)) for t in survivors]
    phi_y = model.encode_replies(token_ids)
    lm_values = np.array([value for _, value in scored[:lm_top]], dtype=np.float32)
    clusters = diversify.build_clusters(survivors, synonyms, contractions)
    metadata = {
        "counts": {
            "reply_corpus": len(reply_texts),
            "distinct": distinct,
            "freq_top": freq_top,
            "lm_top": lm_top,
            "final": len(survivors),
        },
        "dim": int(phi_y.shape[1]),
        "model_hash": persistence.container_hash(persistence.matching_to_container(model)),
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    return ResponseSetArtifact(
        responses=survivors,
        phi_y=phi_y.astype(np.float32),
        lm_scores=lm_values,
        cluster_ids=clusters.cluster_of,
        metadata=metadata,
        _clusters=clusters,
    )


def save_artifact(base_path: str | Path, artifact: ResponseSetArtifact) -> tuple[Path, Path]:
    """Write ``<base>.srm`` (numeric sections) and ``<base>.responses.json``."""
    base = Path(base_path)
    container = persistence.ModelContainer(metadata=dict(artifact.metadata, kind="smartreply-response-set"))
    container.add_section("phi_y", artifact.phi_y)
    container.add_section("lm_scores", artifact.lm_scores)
    container.add_section("cluster_ids", artifact.cluster_ids.astype(np.float32))
    srm_path = base.with_suffix(".srm")
    persistence.save_model(srm_path, container)
    manifest_path = base.with_suffix(".responses.json")
    manifest_path.write_text(
        json.dumps({"responses": artifact.responses}, sort_keys=True, separators=(",", ":")),
        encoding="utf-8",
    )
    return srm_path, manifest_path


def load_artifact(base_path: str | Path) -> ResponseSetArtifact:
    base = Path(base_path)
    container = persistence.load_model(base.with_suffix(".srm"))
    manifest = json.loads(base.with_suffix(".responses.json").read_text("utf-8"))
    return ResponseSetArtifact(
        responses=list(manifest["responses"]),
        phi_y=container.require("phi_y"),
        lm_scores=container.require("lm_scores"),
        cluster_ids=container.require("cluster_ids").astype(np.int64),
        metadata={k: v for k, v in container.metadata.items() if k != "kind"},
    )


# --------------------------------------------------------------------------
# Voting


@dataclass
class VoteTally:
    votes: np.ndarray  # [K] int64, aligned with the pruned candidate list
    samples: int

    def __post_init__(self) -> None:
        if int(self.votes.sum()) != self.samples:
            raise ContractError(f"vote conservation violated: {self.votes.sum()} != {self.samples}")


def constrained_sample_vote(
    message_vec: np.ndarray,
    candidate_matrix: np.ndarray,
    candidate_lm: np.ndarray,
    cvae: CvaeParams,
    samples: int,
    rng: Rng,
    lm_weight: float = 1.0,
) -> tuple[VoteTally, dict]:
    """Hard-voting over prior samples, batched into single matrix ops.

    Draw ``samples`` latent vectors at once, decode them in one pass, score
    the [samples x K] matrix against the pruned candidates plus the lm term,
    and tally per-row argmax (ties to the lower candidate index). Returns
    the tally and decode/score stage timings in microseconds.
    """
    k = candidate_matrix.shape[0]
    if k < 1 or samples < 1:
        raise ContractError(f"need K >= 1 and samples >= 1, got K={k}, samples={samples}")
    t0 = time.perf_counter_ns()
    z = rng.standard_normal((samples, cvae.z_dim))
    decoded = decode_np(cvae, z, message_vec.astype(np.float32))
    t1 = time.perf_counter_ns()
    scores = decoded @ candidate_matrix.T + np.float32(lm_weight) * candidate_lm[None, :]
    winners = np.argmax(scores, axis=1)  # first occurrence wins ties
    votes = np.bincount(winners, minlength=k).astype(np.int64)
    t2 = time.perf_counter_ns()
    tally = VoteTally(votes=votes, samples=samples)
    return tally, {"decode_us": (t1 - t0) / 1000.0, "vote_score_us": (t2 - t1) / 1000.0}


def count_multiplications(R: int, d: int, k: int, samples: int, z_dim: int, hidden: int) -> dict:
    """Analytic scalar-multiply counts for the sampling stage cost model."""
    decoder = ((z_dim + d) * hidden + hidden * d) * samples
    unconstrained = d * R * samples
    constrained = d * k * samples
    return {
        "decoder_multiplies": decoder,
        "unconstrained_scoring_multiplies": unconstrained,
        "constrained_scoring_multiplies": constrained,
        "scoring_ratio": R / k,
    }


# --------------------------------------------------------------------------
# Suggestion pipelines


@dataclass
class Suggestion:
    text: str
    response_id: int
    cluster_id: int
    raw_score: float
    softmax_score: float
    mmr_score: float | None = None
    votes: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class SuggestionResult:
    ranker: str
    suggestions: list[Suggestion]
    timings_us: dict[str, float]
    params: dict

    def __post_init__(self) -> None:
        if len(self.suggestions) > self.params.get("limit", 3):
            raise ContractError("more suggestions than the configured limit")
        if self.params.get("use_lc", True):
            cluster_ids = [s.cluster_id for s in self.suggestions]
            if len(set(cluster_ids)) != len(cluster_ids):
                raise ContractError("suggestions share a lexical cluster")

    def to_dict(self) -> dict:
        return {
            "ranker": self.ranker,
            "suggestions": [s.to_dict() for s in self.suggestions],
            "timings_us": self.timings_us,
            "params": self.params,
        }


def _encode_message(model: MatchingModel, message: str) -> tuple[np.ndarray, float]:
    tokens = tokenize(message)
    if not tokens:
        raise ContractError("message tokenizes to nothing")
    t0 = time.perf_counter_ns()
    vec = model.encode_message(model.vocab.encode(tokens))
    return vec, (time.perf_counter_ns() - t0) / 1000.0


def _finalize(
    ranker: str,
    artifact: ResponseSetArtifact,
    ranked_ids: list[int],
    per_candidate: dict[int, dict],
    timings: dict[str, float],
    config: PipelineConfig,
) -> SuggestionResult:
    t0 = time.perf_counter_ns()
    if config.use_lc:
        kept = diversify.dedupe(ranked_ids, artifact.clusters, limit=config.limit)
    else:
        kept = list(ranked_ids[: config.limit])
    timings["dedup_us"] = (time.perf_counter_ns() - t0) / 1000.0
    suggestions = [
        Suggestion(
            text=artifact.responses[rid],
            response_id=rid,
            cluster_id=int(artifact.cluster_ids[rid]),
            **per_candidate[rid],
        )
        for rid in kept
    ]
    return SuggestionResult(
        ranker=ranker,
        suggestions=suggestions,
        timings_us=timings,
        params=dict(config.to_dict(), ranker=ranker),
    )


def _match_stage(
    model: MatchingModel, artifact: ResponseSetArtifact, message: str, config: PipelineConfig, k: int
) -> tuple[np.ndarray, MatchScores, dict]:
    vec, encode_us = _encode_message(model, message)
    t0 = time.perf_counter_ns()
    scores = match_score(vec, artifact.phi_y, artifact.lm_scores, alpha=config.alpha, k=k)
    timings = {"encode_us": encode_us, "score_us": (time.perf_counter_ns() - t0) / 1000.0}
    return vec, scores, timings


def suggest_matching(
    message: str, model: MatchingModel, artifact: ResponseSetArtifact, config: PipelineConfig
) -> SuggestionResult:
    k = min(config.k, artifact.size)
    _, scores, timings = _match_stage(model, artifact, message, config, k)
    per_candidate = {
        int(rid): {"raw_score": float(scores.raw_scores[i]), "softmax_score": float(scores.softmax_scores[i])}
        for i, rid in enumerate(scores.candidate_ids)
    }
    return _finalize("matching", artifact, scores.candidate_ids.tolist(), per_candidate, timings, config)


def suggest_mmr(
    message: str, model: MatchingModel, artifact: ResponseSetArtifact, config: PipelineConfig
) -> SuggestionResult:
    k = min(config.k, artifact.size)
    _, scores, timings = _match_stage(model, artifact, message, config, k)
    t0 = time.perf_counter_ns()
    reranked = diversify.mmr_rerank(scores.softmax_scores, artifact.phi_y[scores.candidate_ids], config.beta)
    timings["preselect_us"] = (time.perf_counter_ns() - t0) / 1000.0
    ranked_ids = [int(scores.candidate_ids[pos]) for pos in reranked.order]
    per_candidate = {
        int(rid): {
            "raw_score": float(scores.raw_scores[i]),
            "softmax_score": float(scores.softmax_scores[i]),
            "mmr_score": float(reranked.mmr[i]),
        }
        for i, rid in enumerate(scores.candidate_ids)
    }
    return _finalize("mmr", artifact, ranked_ids, per_candidate, timings, config)


def suggest_mcvae(
    message: str,
    model: MatchingModel,
    artifact: ResponseSetArtifact,
    cvae: CvaeParams,
    config: PipelineConfig,
    candidate_override: int | None = None,
) -> SuggestionResult:
    """Constrained sampling + voting; ``candidate_override`` forces the
    pruning size (K = artifact size gives the unconstrained reference)."""
    k = candidate_override if candidate_override is not None else config.k
    k = min(k, artifact.size)
    fetch = min(2 * k, artifact.size) if config.use_mmr_preselect else k
    if config.use_mmr_preselect and fetch < 2 * k:
        warnings.warn(f"response set smaller than 2K={2 * k}; preselecting from {fetch}", UserWarning)
    vec, scores, timings = _match_stage(model, artifact, message, config, fetch)

    t0 = time.perf_counter_ns()
    if config.use_mmr_preselect and fetch > k:
        positions = diversify.mmr_preselect(
            scores.softmax_scores, artifact.phi_y[scores.candidate_ids], config.beta, keep=k
        )
    else:
        positions = np.arange(k)
    timings["preselect_us"] = (time.perf_counter_ns() - t0) / 1000.0

    candidate_ids = scores.candidate_ids[positions]
    candidate_matrix = artifact.phi_y[candidate_ids]
    candidate_lm = artifact.lm_scores[candidate_ids]
    candidate_raw = scores.raw_scores[positions]
    candidate_softmax = scores.softmax_scores[positions]

    rng = Rng(config.seed)
    lm_weight = config.alpha if config.vote_lm_alpha else 1.0
    tally, vote_timings = constrained_sample_vote(
        vec, candidate_matrix, candidate_lm, cvae, config.samples, rng, lm_weight=lm_weight
    )
    timings["sample_vote_us"] = vote_timings["decode_us"] + vote_timings["vote_score_us"]
    timings.update(vote_timings)

    order = np.lexsort((candidate_ids, -candidate_raw, -tally.votes))
    ranked_ids = [int(candidate_ids[pos]) for pos in order]
    per_candidate = {
        int(rid): {
            "raw_score": float(candidate_raw[i]),
            "softmax_score": float(candidate_softmax[i]),
            "votes": int(tally.votes[i]),
        }
        for i, rid in enumerate(candidate_ids)
    }
    return _finalize("mcvae", artifact, ranked_ids, per_candidate, timings, config)


RANKERS = ("matching", "mmr", "mcvae")


@dataclass
class SuggestEngine:
    """Read-only bundle of model + artifact used by service, CLI, and bench."""

    model: MatchingModel
    artifact: ResponseSetArtifact
    cvae: CvaeParams | None = None
    defaults: PipelineConfig = field(default_factory=PipelineConfig)
    model_hash: str = ""

    def suggest(self, message: str, ranker: str, overrides: dict | None = None) -> SuggestionResult:
        config_doc = self.defaults.to_dict()
        if overrides:
            unknown = set(overrides) - set(config_doc)
            if unknown:
                raise ContractError(f"unknown pipeline parameter {sorted(unknown)[0]!r}")
            config_doc.update(overrides)
        config = PipelineConfig.from_dict(config_doc)
        if ranker == "matching":
            return suggest_matching(message, self.model, self.artifact, config)
        if ranker == "mmr":
            return suggest_mmr(message, self.model, self.artifact, config)
        if ranker == "mcvae":
            if self.cvae is None:
                raise ContractError("no CVAE parameters loaded for the mcvae ranker")
            return suggest_mcvae(message, self.model, self.artifact, self.cvae, config)
        raise ContractError(f"unknown ranker {ranker!r}; expected one of {RANKERS}")

    def compare(self, message: str, overrides: dict | None = None) -> dict[str, SuggestionResult]:
        return {r: self.suggest(message, r, overrides) for r in RANKERS if r != "mcvae" or self.cvae is not None}
