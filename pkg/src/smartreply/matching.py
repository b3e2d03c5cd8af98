"""Dual-encoder training with the symmetric loss, and the match scorer.

Training normalizes each golden pair's exponentiated score against both its
message row and reply column within the minibatch (in-batch negatives), so
a batch of size 1 is vacuous; a minimum batch size of 8 is enforced.
Inference scores a message vector against the precomputed response matrix
plus an ``alpha``-weighted language-model term, keeps the top k, and
softmax-normalizes the retained scores.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .autodiff import Rng, Tensor
from .corpus import MessageReplyPair, Vocabulary
from .errors import ContractError, TrainingDiverged
from .optim import Adadelta

log = logging.getLogger(__name__)

MIN_BATCH = 8


def similarity_matrix(message_vecs: Tensor, reply_vecs: Tensor) -> Tensor:
    """Θ[i, j] = Φ_X(x_i) · Φ_Y(y_j) over a minibatch."""
    return ad.matmul(message_vecs, ad.transpose(reply_vecs))


def symmetric_loss(theta: Tensor) -> Tensor:
    """Mean negative log of the bidirectionally normalized golden scores.

    p(Θ_ii) = e^{Θ_ii} / (Σ_j e^{Θ_ij} + Σ_j e^{Θ_ji} − e^{Θ_ii});
    stabilized by subtracting each item's row/column max (detached) before
    exponentiation, which leaves value and gradient exact.
    """
    if len(theta.shape) != 2 or theta.shape[0] != theta.shape[1]:
        raise ContractError(f"symmetric loss needs a square matrix, got {theta.shape}")
    shift = np.maximum(theta.data.max(axis=1), theta.data.max(axis=0))
    row_exp = ad.exp(ad.sub(theta, ad.constant(shift[:, None])))
    col_exp = ad.exp(ad.sub(theta, ad.constant(shift[None, :])))
    row_sums = ad.tensor_sum(row_exp, axis=1)  # Σ_j e^{Θ_ij − s_i}
    col_sums = ad.tensor_sum(col_exp, axis=0)  # Σ_j e^{Θ_ji − s_i}
    diag_shifted = ad.sub(ad.diag_part(theta), ad.constant(shift))
    denom = ad.sub(ad.add(row_sums, col_sums), ad.exp(diag_shifted))
    log_p = ad.sub(diag_shifted, ad.log(denom))
    return ad.neg(ad.mean(log_p))


def golden_probabilities(theta: np.ndarray) -> np.ndarray:
    """Forward-only p(Θ_ii) per item (diagnostics and tests)."""
    theta = np.asarray(theta, dtype=np.float32)
    shift = np.maximum(theta.max(axis=1), theta.max(axis=0))
    row = np.exp(theta - shift[:, None]).sum(axis=1)
    col = np.exp(theta - shift[None, :]).sum(axis=0)
    diag = np.exp(np.diagonal(theta) - shift)
    return diag / (row + col - diag)


# --------------------------------------------------------------------------
# Inference scoring


@dataclass
class MatchScores:
    """Top-k candidates sorted by raw score desc (ties: smaller id first)."""

    candidate_ids: np.ndarray  # [k] int
    raw_scores: np.ndarray  # [k] float32, descending
    softmax_scores: np.ndarray  # [k] float32, sums to 1


def match_score(
    message_vec: np.ndarray,
    response_matrix: np.ndarray,
    lm_scores: np.ndarray,
    alpha: float,
    k: int,
) -> MatchScores:
    if alpha < 0:
        raise ContractError(f"alpha must be >= 0, got {alpha}")
    n_responses = response_matrix.shape[0]
    if k > n_responses:
        raise ContractError(f"k={k} exceeds response set size {n_responses}")
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    raw = response_matrix @ message_vec.astype(np.float32) + np.float32(alpha) * lm_scores
    order = np.lexsort((np.arange(n_responses), -raw))
    top = order[:k]
    raw_top = raw[top]
    shifted = np.exp(raw_top - raw_top.max())
    return MatchScores(
        candidate_ids=top.astype(np.int64),
        raw_scores=raw_top,
        softmax_scores=(shifted / shifted.sum()).astype(np.float32),
    )


# --------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 5
    seed: int = 0
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 25.0  # Adadelta step multiplier; desk-scale gradients are tiny
    alpha: float = 0.1  # inference-time lm weight carried into model metadata
    k: int = 15  # inference-time candidate count carried into model metadata
    encoder: enc.EncoderConfig = field(default_factory=enc.EncoderConfig)
    share_embedding: bool = True

    def to_dict(self) -> dict:
        doc = {k: v for k, v in self.__dict__.items() if k != "encoder"}
        doc["encoder"] = self.encoder.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        encoder_doc = doc.pop("encoder", None)
        cfg = cls(**doc)
        if encoder_doc:
            cfg.encoder = enc.EncoderConfig.from_dict(encoder_doc)
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MatchingModel:
    vocab: Vocabulary
    config: TrainConfig
    message_encoder: enc.EncoderParams
    reply_encoder: enc.EncoderParams

    @property
    def output_dim(self) -> int:
        return self.message_encoder.output_dim

    def parameters(self) -> list[Tensor]:
        return self.message_encoder.parameters() + self.reply_encoder.parameters()

    def named_tensors(self) -> dict[str, Tensor]:
        named = self.message_encoder.named_tensors("msg")
        reply_named = self.reply_encoder.named_tensors("rep")
        if self.config.share_embedding:
            reply_named.pop("rep.embedding")
        named.update(reply_named)
        return named

    def encode_message(self, token_ids: list[int]) -> np.ndarray:
        return enc.encode(self.message_encoder, token_ids).data

    def encode_replies(self, token_id_seqs: list[list[int]], chunk: int = 256) -> np.ndarray:
        rows = []
        for start in range(0, len(token_id_seqs), chunk):
            rows.append(enc.encode_batch(self.reply_encoder, token_id_seqs[start:start + chunk]).data)
        return np.vstack(rows)


def init_matching_model(vocab: Vocabulary, config: TrainConfig) -> MatchingModel:
    rng = Rng(config.seed).spawn(101)
    message_encoder = enc.init_encoder(config.encoder, len(vocab), rng)
    shared = message_encoder.embedding if config.share_embedding else None
    reply_encoder = enc.init_encoder(config.encoder, len(vocab), rng, embedding=shared)
    return MatchingModel(vocab, config, message_encoder, reply_encoder)


def _encoded_batches(pairs, vocab, batch_size):
    ids_m = [vocab.encode(p.message) for p in pairs]
    ids_r = [vocab.encode(p.reply) for p in pairs]
    return ids_m, ids_r


def validation_loss(model: MatchingModel, pairs: list[MessageReplyPair], batch_size: int) -> float:
    """Dropout-free mean symmetric loss over validation batches."""
    ids_m, ids_r = _encoded_batches(pairs, model.vocab, batch_size)
    total, weight = 0.0, 0
    for start in range(0, len(pairs), batch_size):
        m_chunk = ids_m[start:start + batch_size]
        r_chunk = ids_r[start:start + batch_size]
        if len(m_chunk) < 2:
            continue
        phi_x = enc.encode_batch(model.message_encoder, m_chunk)
        phi_y = enc.encode_batch(model.reply_encoder, r_chunk)
        loss = symmetric_loss(similarity_matrix(phi_x, phi_y)).item()
        total += loss * len(m_chunk)
        weight += len(m_chunk)
    if weight == 0:
        raise ContractError("validation set too small to batch")
    return total / weight


def train_matching(
    train_pairs: list[MessageReplyPair],
    val_pairs: list[MessageReplyPair],
    vocab: Vocabulary,
    config: TrainConfig,
) -> tuple[MatchingModel, dict]:
    """Adadelta minibatch training; returns the best-validation-epoch model.

    The history dict records per-epoch train/validation losses; epoch 0 is
    the untouched initialization. Fixed seeds give bit-identical parameters.
    """
    if config.batch_size < MIN_BATCH:
        raise ContractError(
            f"batch_size must be >= {MIN_BATCH} (symmetric loss is vacuous on tiny batches), got {config.batch_size}"
        )
    if len(train_pairs) < config.batch_size:
        raise ContractError("training set smaller than one batch")

    model = init_matching_model(vocab, config)
    params = model.parameters()
    opt = Adadelta(params, rho=config.rho, eps=config.eps, lr=config.lr)
    shuffle_rng = Rng(config.seed).spawn(7)
    dropout_rng = Rng(config.seed).spawn(13)

    ids_m, ids_r = _encoded_batches(train_pairs, vocab, config.batch_size)
    history: dict = {"train_loss": [], "val_loss": [validation_loss(model, val_pairs, config.batch_size)]}
    best_val = history["val_loss"][0]
    best_snapshot = [p.data.copy() for p in opt.params]

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_pairs))
        epoch_loss, n_batches = 0.0, 0
        for step, start in enumerate(range(0, len(order) - config.batch_size + 1, config.batch_size)):
            batch_idx = order[start:start + config.batch_size]
            m_chunk = [ids_m[i] for i in batch_idx]
            r_chunk = [ids_r[i] for i in batch_idx]
            with ad.Tape() as tape:
                phi_x = enc.encode_batch(model.message_encoder, m_chunk, mode="train", dropout_rng=dropout_rng)
                phi_y = enc.encode_batch(model.reply_encoder, r_chunk, mode="train", dropout_rng=dropout_rng)
                loss = symmetric_loss(similarity_matrix(phi_x, phi_y))
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingDiverged("matching loss is non-finite", epoch=epoch, step=step)
            grads = tape.grad(loss, opt.params)
            opt.step(grads)
            epoch_loss += loss_value
            n_batches += 1
        history["train_loss"].append(epoch_loss / max(n_batches, 1))
        val = validation_loss(model, val_pairs, config.batch_size)
        history["val_loss"].append(val)
        log.info("epoch %d: train %.4f val %.4f", epoch + 1, history["train_loss"][-1], val)
        if val < best_val:
            best_val = val
            best_snapshot = [p.data.copy() for p in opt.params]

    for p, snap in zip(opt.params, best_snapshot):
        p.data[...] = snap
    history["best_val_loss"] = best_val
    return model, history
