"""Message/reply text encoders.

Two variants share an embedding layer (with inverted dropout in train mode):

* ``bi_recurrent``: stacked bi-directional LSTM; the output is the
  concatenation of the forward and backward final hidden states, so the
  encoded dimension is ``2 * hidden`` per the production architecture.
* ``feed_forward``: mean of embeddings through tanh layers and a linear
  head — order-invariant by construction, kept as the cheap comparison
  variant.

Padding never leaks into outputs: each timestep update is masked by true
sequence length, carrying the previous state across pad positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .errors import ContractError

BI_RECURRENT = "bi_recurrent"
FEED_FORWARD = "feed_forward"


@dataclass
class EncoderConfig:
    variant: str = BI_RECURRENT
    embed_size: int = 64
    hidden: int = 64
    layers: int = 1
    ff_output_dim: int = 128  # feed-forward head size (bi variant uses 2*hidden)
    dropout: float = 0.2

    def __post_init__(self) -> None:
        if self.variant not in (BI_RECURRENT, FEED_FORWARD):
            raise ContractError(f"unknown encoder variant {self.variant!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden if self.variant == BI_RECURRENT else self.ff_output_dim

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "embed_size": self.embed_size,
            "hidden": self.hidden,
            "layers": self.layers,
            "ff_output_dim": self.ff_output_dim,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EncoderConfig":
        return cls(**{k: doc[k] for k in ("variant", "embed_size", "hidden", "layers", "ff_output_dim", "dropout")})


def _xavier(rng: Rng, fan_in: int, fan_out: int) -> np.ndarray:
    bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform((fan_in, fan_out), -bound, bound)


@dataclass
class LstmCell:
    wx: Tensor  # [in, 4h]
    wh: Tensor  # [h, 4h]
    b: Tensor  # [1, 4h]

    def tensors(self) -> list[Tensor]:
        return [self.wx, self.wh, self.b]


@dataclass
class EncoderParams:
    """Weights for one encoder stack; the embedding may be shared."""

    config: EncoderConfig
    embedding: Tensor  # [vocab, e]
    cells: list[dict[str, LstmCell]] = field(default_factory=list)  # per layer: fwd/bwd
    ff_layers: list[tuple[Tensor, Tensor]] = field(default_factory=list)
    ff_out: tuple[Tensor, Tensor] | None = None

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    def parameters(self, include_embedding: bool = True) -> list[Tensor]:
        params: list[Tensor] = [self.embedding] if include_embedding else []
        for layer in self.cells:
            for direction in ("fwd", "bwd"):
                params.extend(layer[direction].tensors())
        for w, b in self.ff_layers:
            params.extend([w, b])
        if self.ff_out is not None:
            params.extend(self.ff_out)
        return params

    def named_tensors(self, prefix: str) -> dict[str, Tensor]:
        named = {f"{prefix}.embedding": self.embedding}
        for li, layer in enumerate(self.cells):
            for direction in ("fwd", "bwd"):
                cell = layer[direction]
                named[f"{prefix}.l{li}.{direction}.wx"] = cell.wx
                named[f"{prefix}.l{li}.{direction}.wh"] = cell.wh
                named[f"{prefix}.l{li}.{direction}.b"] = cell.b
        for li, (w, b) in enumerate(self.ff_layers):
            named[f"{prefix}.ff{li}.w"] = w
            named[f"{prefix}.ff{li}.b"] = b
        if self.ff_out is not None:
            named[f"{prefix}.out.w"] = self.ff_out[0]
            named[f"{prefix}.out.b"] = self.ff_out[1]
        return named


def init_encoder(config: EncoderConfig, vocab_size: int, rng: Rng, embedding: Tensor | None = None) -> EncoderParams:
    """Fresh Xavier-initialized encoder; pass ``embedding`` to share one."""
    if embedding is None:
        embedding = Tensor(rng.uniform((vocab_size, config.embed_size), -0.1, 0.1))
    params = EncoderParams(config=config, embedding=embedding)
    if config.variant == BI_RECURRENT:
        for layer in range(config.layers):
            in_dim = config.embed_size if layer == 0 else 2 * config.hidden
            layer_cells = {}
            for direction in ("fwd", "bwd"):
                bias = np.zeros((1, 4 * config.hidden), dtype=np.float32)
                bias[0, config.hidden: 2 * config.hidden] = 1.0  # forget-gate bias
                layer_cells[direction] = LstmCell(
                    wx=Tensor(_xavier(rng, in_dim, 4 * config.hidden)),
                    wh=Tensor(_xavier(rng, config.hidden, 4 * config.hidden)),
                    b=Tensor(bias),
                )
            params.cells.append(layer_cells)
    else:
        in_dim = config.embed_size
        for _ in range(config.layers):
            params.ff_layers.append(
                (Tensor(_xavier(rng, in_dim, config.hidden)), Tensor(np.zeros((1, config.hidden), dtype=np.float32)))
            )
            in_dim = config.hidden
        params.ff_out = (
            Tensor(_xavier(rng, in_dim, config.ff_output_dim)),
            Tensor(np.zeros((1, config.ff_output_dim), dtype=np.float32)),
        )
    return params


# --------------------------------------------------------------------------
# Forward passes


def pad_batch(token_id_seqs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Right-padded id matrix [n, T] and float mask [n, T]."""
    if not token_id_seqs:
        raise ContractError("empty batch")
    if any(len(seq) == 0 for seq in token_id_seqs):
        raise ContractError("cannot encode an empty token sequence")
    n = len(token_id_seqs)
    max_len = max(len(seq) for seq in token_id_seqs)
    ids = np.zeros((n, max_len), dtype=np.int64)
    mask = np.zeros((n, max_len), dtype=np.float32)
    for i, seq in enumerate(token_id_seqs):
        ids[i, : len(seq)] = seq
        mask[i, : len(seq)] = 1.0
    return ids, mask


def _dropout(x: Tensor, rate: float, rng: Rng) -> Tensor:
    keep = (rng.uniform(x.shape) >= rate).astype(np.float32) / np.float32(1.0 - rate)
    return ad.mul(x, ad.constant(keep))


def _lstm_step(cell: LstmCell, x: Tensor, h: Tensor, c: Tensor, hidden: int) -> tuple[Tensor, Tensor]:
    z = ad.add(ad.add(ad.matmul(x, cell.wx), ad.matmul(h, cell.wh)), cell.b)
    i = ad.sigmoid(ad.narrow(z, 1, 0, hidden))
    f = ad.sigmoid(ad.narrow(z, 1, hidden, hidden))
    g = ad.tanh(ad.narrow(z, 1, 2 * hidden, hidden))
    o = ad.sigmoid(ad.narrow(z, 1, 3 * hidden, hidden))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def _masked_carry(new: Tensor, prev: Tensor, mask_col: np.ndarray) -> Tensor:
    m = ad.constant(mask_col[:, None])
    inv = ad.constant(1.0 - mask_col[:, None])
    return ad.add(ad.mul(m, new), ad.mul(inv, prev))


def _run_direction(
    cell: LstmCell, inputs: list[Tensor], mask: np.ndarray, hidden: int, reverse: bool
) -> tuple[list[Tensor], Tensor]:
    """Hidden state per timestep (original time order) and the final state."""
    n = mask.shape[0]
    h = ad.constant(np.zeros((n, hidden), dtype=np.float32))
    c = ad.constant(np.zeros((n, hidden), dtype=np.float32))
    order = range(len(inputs) - 1, -1, -1) if reverse else range(len(inputs))
    states: dict[int, Tensor] = {}
    for t in order:
        h_new, c_new = _lstm_step(cell, inputs[t], h, c, hidden)
        h = _masked_carry(h_new, h, mask[:, t])
        c = _masked_carry(c_new, c, mask[:, t])
        states[t] = h
    return [states[t] for t in range(len(inputs))], h


def encode_batch(
    params: EncoderParams,
    token_id_seqs: list[list[int]],
    mode: str = "infer",
    dropout_rng: Rng | None = None,
) -> Tensor:
    """Encode a batch of id sequences to [n, output_dim].

    ``mode="train"`` applies inverted dropout after the embedding layer and
    requires ``dropout_rng``; infer mode is deterministic.
    """
    if mode not in ("train", "infer"):
        raise ContractError(f"mode must be 'train' or 'infer', got {mode!r}")
    if mode == "train" and dropout_rng is None and params.config.dropout > 0:
        raise ContractError("train mode requires a dropout rng")
    ids, mask = pad_batch(token_id_seqs)
    cfg = params.config
    steps = ids.shape[1]

    embedded: list[Tensor] = []
    for t in range(steps):
        x = ad.gather_rows(params.embedding, ids[:, t])
        if mode == "train" and cfg.dropout > 0:
            x = _dropout(x, cfg.dropout, dropout_rng)
        # zero pad positions so downstream sums are length-safe
        x = ad.mul(x, ad.constant(mask[:, t][:, None]))
        embedded.append(x)

    if cfg.variant == FEED_FORWARD:
        total = embedded[0]
        for x in embedded[1:]:
            total = ad.add(total, x)
        lengths = mask.sum(axis=1, keepdims=True)
        h = ad.mul(total, ad.constant(1.0 / lengths))
        for w, b in params.ff_layers:
            h = ad.tanh(ad.add(ad.matmul(h, w), b))
        w_out, b_out = params.ff_out
        return ad.add(ad.matmul(h, w_out), b_out)

    layer_inputs = embedded
    final_fwd: Tensor | None = None
    final_bwd: Tensor | None = None
    for layer in params.cells:
        fwd_states, final_fwd = _run_direction(layer["fwd"], layer_inputs, mask, cfg.hidden, reverse=False)
        bwd_states, final_bwd = _run_direction(layer["bwd"], layer_inputs, mask, cfg.hidden, reverse=True)
        layer_inputs = [ad.concat([f, b], axis=1) for f, b in zip(fwd_states, bwd_states)]
    return ad.concat([final_fwd, final_bwd], axis=1)


def encode(
    params: EncoderParams,
    token_ids: list[int],
    mode: str = "infer",
    dropout_rng: Rng | None = None,
) -> Tensor:
    """Encode one sequence to a vector of shape (output_dim,)."""
    if not token_ids:
        raise ContractError("cannot encode an empty token sequence")
    row = encode_batch(params, [token_ids], mode=mode, dropout_rng=dropout_rng)
    return ad.reshape(row, (params.output_dim,))
