"""Response diversification baselines: lexical clustering and one-pass MMR.

Lexical clustering joins responses that are equal after canonicalization
(punctuation stripped, contractions expanded, synonyms mapped to a class
representative) or that differ by one word-level edit, unless the differing
word is a negation — "I can make it" and "I can't make it" must never merge.
The join relation's transitive closure is taken with union-find, yielding a
partition used for de-duplication.

MMR re-ranks a candidate list by blending relevance with novelty: each
candidate's mean cosine similarity to the other candidates is subtracted,
weighted by (1 - beta). The one-pass approximation scores all candidates
against each other once instead of iterating, so it costs a single matrix
product.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ContractError

NEGATION_WORDS = frozenset({"not", "no", "never", "cannot"})

_PUNCT_STRIP = string.punctuation.replace("'", "")  # keep apostrophes word-internal


def _load_table(name: str) -> dict[str, str]:
    return json.loads(resources.files("smartreply.data").joinpath(name).read_text("utf-8"))


def default_synonyms() -> dict[str, str]:
    return _load_table("synonyms.json")


def default_contractions() -> dict[str, str]:
    return _load_table("contractions.json")


def is_negation(word: str) -> bool:
    return word in NEGATION_WORDS or word.endswith("n't")


def canonicalize(
    text: str,
    synonyms: dict[str, str] | None = None,
    contractions: dict[str, str] | None = None,
) -> tuple[str, ...]:
    """Word tuple after punctuation strip, contraction expansion, synonym map."""
    synonyms = default_synonyms() if synonyms is None else synonyms
    contractions = default_contractions() if contractions is None else contractions
    words: list[str] = []
    for raw in text.lower().split():
        word = raw.strip(_PUNCT_STRIP)
        if not word:
            continue
        expanded = contractions.get(word, word)
        for part in expanded.split():
            words.append(synonyms.get(part, part))
    return tuple(words)


def _one_word_edit_joinable(a: tuple[str, ...], b: tuple[str, ...]) -> bool:
    """True iff a and b differ by exactly one non-negation word edit.

    Single-word responses never edit-join: replacing the only word is a
    different response, not a variant ("Sure" vs "Ok" must stay apart).
    """
    la, lb = len(a), len(b)
    if min(la, lb) < 2:
        return False
    if abs(la - lb) > 1:
        return False
    if la == lb:
        diffs = [(x, y) for x, y in zip(a, b) if x != y]
        if len(diffs) != 1:
            return False
        x, y = diffs[0]
        return not (is_negation(x) or is_negation(y))
    if la > lb:
        a, b = b, a
        la, lb = lb, la
    # b is a with one insertion: find it
    i = 0
    while i < la and a[i] == b[i]:
        i += 1
    if a[i:] != b[i + 1:]:
        return False
    return not is_negation(b[i])


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


@dataclass
class LexicalClusters:
    """Partition of response indices; cluster id = smallest member index."""

    cluster_of: np.ndarray  # [n] int64
    members: dict[int, list[int]]

    def __len__(self) -> int:
        return len(self.cluster_of)

    def same_cluster(self, i: int, j: int) -> bool:
        return self.cluster_of[i] == self.cluster_of[j]


def build_clusters(
    responses: list[str],
    synonyms: dict[str, str] | None = None,
    contractions: dict[str, str] | None = None,
) -> LexicalClusters:
    """Cluster response texts by the canonical-equality / one-edit rules."""
    synonyms = default_synonyms() if synonyms is None else synonyms
    contractions = default_contractions() if contractions is None else contractions
    canon = [canonicalize(t, synonyms, contractions) for t in responses]
    uf = _UnionFind(len(responses))

    # exact canonical equality
    first_seen: dict[tuple[str, ...], int] = {}
    for i, form in enumerate(canon):
        if form in first_seen:
            uf.union(first_seen[form], i)
        else:
            first_seen[form] = i

    # one-word-edit joins between distinct canonical forms, length-bucketed
    forms = list(first_seen.items())  # (form, representative index)
    by_length: dict[int, list[int]] = {}
    for idx, (form, _) in enumerate(forms):
        by_length.setdefault(len(form), []).append(idx)
    for idx, (form, rep) in enumerate(forms):
        candidates = [j for j in by_length.get(len(form), ()) if j > idx]
        candidates += by_length.get(len(form) + 1, [])
        for jdx in candidates:
            other_form, other_rep = forms[jdx]
            if _one_word_edit_joinable(form, other_form):
                uf.union(rep, other_rep)

    cluster_of = np.empty(len(responses), dtype=np.int64)
    members: dict[int, list[int]] = {}
    for i in range(len(responses)):
        root = uf.find(i)
        cluster_of[i] = root
        members.setdefault(root, []).append(i)
    return LexicalClusters(cluster_of=cluster_of, members=members)


def clusters_from_ids(cluster_ids: np.ndarray) -> LexicalClusters:
    """Rehydrate a partition from a stored cluster-id array."""
    members: dict[int, list[int]] = {}
    for i, cid in enumerate(cluster_ids.tolist()):
        members.setdefault(int(cid), []).append(i)
    return LexicalClusters(cluster_of=np.asarray(cluster_ids, dtype=np.int64), members=members)


def dedupe(ranked_ids: list[int] | np.ndarray, clusters: LexicalClusters, limit: int = 3) -> list[int]:
    """First occurrence per cluster, rank order preserved, truncated."""
    seen: set[int] = set()
    kept: list[int] = []
    for rid in ranked_ids:
        cid = int(clusters.cluster_of[int(rid)])
        if cid in seen:
            continue
        seen.add(cid)
        kept.append(int(rid))
        if len(kept) >= limit:
            break
    return kept


# --------------------------------------------------------------------------
# MMR


@dataclass
class MmrScores:
    novelty: np.ndarray  # [K], mean cosine to the other candidates
    mmr: np.ndarray  # [K], beta*score - (1-beta)*novelty
    beta: float
    order: np.ndarray  # [K] candidate positions sorted by mmr desc


def mmr_rerank(scores: np.ndarray, vectors: np.ndarray, beta: float) -> MmrScores:
    """One-pass MMR over K candidates.

    ``scores`` are the softmax-normalized match scores; ``vectors`` the
    candidates' encoded response vectors. Ties keep original rank order.
    """
    k = len(scores)
    if k < 2:
        raise ContractError(f"MMR needs >=2 candidates, got {k}")
    if not 0.0 <= beta <= 1.0:
        raise ContractError(f"beta must be in [0, 1], got {beta}")
    if vectors.shape[0] != k:
        raise ContractError(f"{k} scores but {vectors.shape[0]} vectors")
    norms = np.linalg.norm(vectors.astype(np.float32), axis=1)
    if np.any(norms == 0):
        raise ContractError("zero-norm response vector has no cosine similarity")
    unit = vectors / norms[:, None]
    cosine = unit @ unit.T
    novelty = ((cosine.sum(axis=1) - 1.0) / (k - 1)).astype(np.float32)
    mmr = (beta * np.asarray(scores, dtype=np.float32) - (1.0 - beta) * novelty).astype(np.float32)
    order = np.lexsort((np.arange(k), -mmr))
    return MmrScores(novelty=novelty, mmr=mmr, beta=beta, order=order)


def mmr_preselect(scores: np.ndarray, vectors: np.ndarray, beta: float, keep: int) -> np.ndarray:
    """Positions of the top ``keep`` candidates by MMR (feeds sampling)."""
    if keep < 1:
        raise ContractError(f"keep must be >= 1, got {keep}")
    if keep >= len(scores):
        return np.arange(len(scores))
    reranked = mmr_rerank(scores, vectors, beta)
    return reranked.order[:keep]
