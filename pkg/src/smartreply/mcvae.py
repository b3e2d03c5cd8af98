"""Latent-intent CVAE layers trained on top of a frozen matching model.

The recognition network reads a concatenated (message, reply) vector pair
and produces a Gaussian posterior (mu, sigma); the reparameterized sample
feeds a two-layer decoder conditioned on the message vector to regenerate
the reply vector. Training maximizes the ELBO: closed-form KL to a standard
normal prior plus a reconstruction term computed with the symmetric loss
between generated and golden reply vectors inside the minibatch (one noise
sample per item).

Base encoder parameters are never touched: their outputs are precomputed
once in inference mode, so the freeze contract holds bitwise by
construction.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .autodiff import Rng, Tensor
from .corpus import MessageReplyPair
from .errors import ContractError, TrainingDiverged
from .matching import MatchingModel, symmetric_loss
from .optim import Adadelta

log = logging.getLogger(__name__)

COLLAPSE_KL_THRESHOLD = 0.01  # nats
COLLAPSE_EPOCHS = 3
LOGVAR_CLAMP = 6.0  # sigma stays in [e^-3, e^3]; unbounded heads destabilize training


@dataclass
class CvaeConfig:
    z_dim: int = 256
    hidden: int | None = None  # None: match the encoder output dimension
    kl_weight: float = 1.0
    kl_anneal_steps: int = 0  # linear 0->1 warmup; 0 disables
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0  # larger multipliers destabilize the sigma head

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, doc: dict) -> "CvaeConfig":
        return cls(**doc)

    @classmethod
    def from_json(cls, path: str | Path) -> "CvaeConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CvaeParams:
    """Recognition and decoder weights; sigma is exp(logvar/2), so > 0."""

    z_dim: int
    hidden: int
    d: int
    w_mu1: Tensor  # [2d, hidden]
    b_mu1: Tensor  # [1, hidden]
    w_mu2: Tensor  # [hidden, z]
    b_mu2: Tensor  # [1, z]
    w_sigma2: Tensor  # [hidden, z]
    b_sigma2: Tensor  # [1, z]
    w_dec1: Tensor  # [z + d, hidden]
    b_dec1: Tensor  # [1, hidden]
    w_dec2: Tensor  # [hidden, d]
    b_dec2: Tensor  # [1, d]

    def parameters(self) -> list[Tensor]:
        return [self.w_mu1, self.b_mu1, self.w_mu2, self.b_mu2, self.w_sigma2,
                self.b_sigma2, self.w_dec1, self.b_dec1, self.w_dec2, self.b_dec2]

    def named_tensors(self, prefix: str = "cvae") -> dict[str, Tensor]:
        names = ("w_mu1", "b_mu1", "w_mu2", "b_mu2", "w_sigma2", "b_sigma2",
                 "w_dec1", "b_dec1", "w_dec2", "b_dec2")
        return {f"{prefix}.{n}": getattr(self, n) for n in names}


def init_cvae(d: int, config: CvaeConfig) -> CvaeParams:
    hidden = config.hidden if config.hidden is not None else d
    rng = Rng(config.seed).spawn(211)

    def xavier(fan_in, fan_out):
        bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
        return Tensor(rng.uniform((fan_in, fan_out), -bound, bound))

    def zeros(cols):
        return Tensor(np.zeros((1, cols), dtype=np.float32))

    return CvaeParams(
        z_dim=config.z_dim, hidden=hidden, d=d,
        w_mu1=xavier(2 * d, hidden), b_mu1=zeros(hidden),
        w_mu2=xavier(hidden, config.z_dim), b_mu2=zeros(config.z_dim),
        w_sigma2=xavier(hidden, config.z_dim), b_sigma2=zeros(config.z_dim),
        w_dec1=xavier(config.z_dim + d, hidden), b_dec1=zeros(hidden),
        w_dec2=xavier(hidden, d), b_dec2=zeros(d),
    )


def _as_matrix(t: Tensor | np.ndarray) -> Tensor:
    t = ad.as_tensor(t)
    if len(t.shape) == 1:
        return ad.reshape(t, (1, t.shape[0]))
    return t


def recognize(params: CvaeParams, phi_x: Tensor | np.ndarray, phi_y: Tensor | np.ndarray) -> tuple[Tensor, Tensor]:
    """Posterior (mu, sigma) from a message/reply vector (or batch) pair."""
    x, y = _as_matrix(phi_x), _as_matrix(phi_y)
    if x.shape[1] != params.d or y.shape[1] != params.d:
        raise ContractError(f"expected dimension {params.d}, got {x.shape} / {y.shape}")
    h = ad.tanh(ad.add(ad.matmul(ad.concat([x, y], axis=1), params.w_mu1), params.b_mu1))
    mu = ad.add(ad.matmul(h, params.w_mu2), params.b_mu2)
    logvar = ad.clip(ad.add(ad.matmul(h, params.w_sigma2), params.b_sigma2), -LOGVAR_CLAMP, LOGVAR_CLAMP)
    sigma = ad.exp(ad.mul(logvar, ad.constant(0.5)))
    return mu, sigma


def reparameterize(mu: Tensor, sigma: Tensor, eps: Tensor) -> Tensor:
    """z = mu + sigma * eps, elementwise."""
    if mu.shape != sigma.shape or mu.shape != eps.shape:
        raise ContractError(f"shape mismatch: mu {mu.shape}, sigma {sigma.shape}, eps {eps.shape}")
    return ad.add(mu, ad.mul(sigma, eps))


def decode(params: CvaeParams, z: Tensor | np.ndarray, phi_x: Tensor | np.ndarray) -> Tensor:
    """Generated reply vector(s) from latent sample(s) and message vector(s)."""
    z, x = _as_matrix(z), _as_matrix(phi_x)
    if z.shape[1] != params.z_dim:
        raise ContractError(f"latent dimension {z.shape[1]} != {params.z_dim}")
    if x.shape[1] != params.d:
        raise ContractError(f"message dimension {x.shape[1]} != {params.d}")
    if x.shape[0] == 1 and z.shape[0] > 1:
        ones = ad.constant(np.ones((z.shape[0], 1), dtype=np.float32))
        x = ad.matmul(ones, x)  # row-broadcast with gradient accumulation
    h = ad.tanh(ad.add(ad.matmul(ad.concat([z, x], axis=1), params.w_dec1), params.b_dec1))
    return ad.add(ad.matmul(h, params.w_dec2), params.b_dec2)


def decode_np(params: CvaeParams, z: np.ndarray, phi_x: np.ndarray) -> np.ndarray:
    """Forward-only decoder on raw arrays (hot path for sampling)."""
    x = np.broadcast_to(phi_x, (z.shape[0], params.d))
    joined = np.concatenate([z, x], axis=1)
    h = np.tanh(joined @ params.w_dec1.data + params.b_dec1.data)
    return h @ params.w_dec2.data + params.b_dec2.data


def kl_divergence(mu: Tensor, sigma: Tensor) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)); batch input returns the batch mean."""
    sq_mu = ad.mul(mu, mu)
    sq_sigma = ad.mul(sigma, sigma)
    terms = ad.sub(ad.sub(ad.add(sq_mu, sq_sigma), ad.constant(1.0)), ad.log(sq_sigma))
    if len(mu.shape) == 1:
        return ad.mul(ad.tensor_sum(terms), ad.constant(0.5))
    per_item = ad.tensor_sum(terms, axis=1)
    return ad.mul(ad.mean(per_item), ad.constant(0.5))


@dataclass
class ElboReport:
    kl: float
    reconstruction: float  # E[ln p], i.e. negative symmetric loss
    total: float  # elbo = reconstruction - kl
    loss: float  # kl_weight * kl - reconstruction (minimized)
    mu_sq_mean: float
    sigma_sq_mean: float


def elbo_loss(
    phi_x: Tensor | np.ndarray,
    phi_y: Tensor | np.ndarray,
    params: CvaeParams,
    rng: Rng,
    kl_weight: float = 1.0,
) -> tuple[Tensor, ElboReport]:
    """Minibatch ELBO loss tensor plus a detached report.

    One noise sample per item; the reconstruction term applies the
    symmetric loss to the similarity matrix between generated and golden
    reply vectors, so in-batch items act as negatives for reconstruction.
    """
    x, y = _as_matrix(phi_x), _as_matrix(phi_y)
    n = x.shape[0]
    if n < 8:
        raise ContractError(f"ELBO batch must have >= 8 items (symmetric loss), got {n}")
    mu, sigma = recognize(params, x, y)
    eps = ad.sample_gaussian(rng, (n, params.z_dim))
    z = reparameterize(mu, sigma, eps)
    generated = decode(params, z, x)
    theta_hat = ad.matmul(generated, ad.transpose(ad.as_tensor(y)))
    recon_loss = symmetric_loss(theta_hat)
    kl = kl_divergence(mu, sigma)
    loss = ad.add(ad.mul(ad.constant(np.float32(kl_weight)), kl), recon_loss)
    report = ElboReport(
        kl=kl.item(),
        reconstruction=-recon_loss.item(),
        total=-recon_loss.item() - kl.item(),
        loss=loss.item(),
        mu_sq_mean=float((mu.data ** 2).mean()),
        sigma_sq_mean=float((sigma.data ** 2).mean()),
    )
    return loss, report


# --------------------------------------------------------------------------
# Training


def encode_pairs_frozen(model: MatchingModel, pairs: list[MessageReplyPair], chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Inference-mode message/reply encodings; the base model is read-only."""
    ids_m = [model.vocab.encode(p.message) for p in pairs]
    ids_r = [model.vocab.encode(p.reply) for p in pairs]
    xs, ys = [], []
    for start in range(0, len(pairs), chunk):
        xs.append(enc.encode_batch(model.message_encoder, ids_m[start:start + chunk]).data)
        ys.append(enc.encode_batch(model.reply_encoder, ids_r[start:start + chunk]).data)
    return np.vstack(xs), np.vstack(ys)


def train_cvae(
    model: MatchingModel,
    train_pairs: list[MessageReplyPair],
    val_pairs: list[MessageReplyPair],
    config: CvaeConfig,
) -> tuple[CvaeParams, dict]:
    """Adadelta over CVAE parameters only; selects the best-validation epoch.

    Emits a posterior-collapse warning when the mean KL stays below
    0.01 nats for 3 consecutive epochs.
    """
    if config.batch_size < 8:
        raise ContractError(f"batch_size must be >= 8, got {config.batch_size}")
    phi_x, phi_y = encode_pairs_frozen(model, train_pairs)
    val_x, val_y = encode_pairs_frozen(model, val_pairs)
    params = init_cvae(model.output_dim, config)
    opt = Adadelta(params.parameters(), rho=config.rho, eps=config.eps, lr=config.lr)
    shuffle_rng = Rng(config.seed).spawn(31)
    noise_rng = Rng(config.seed).spawn(37)

    def validation_report() -> ElboReport:
        # fixed noise stream: epochs are compared on identical epsilon draws
        rng = Rng(config.seed).spawn(999)
        reports = []
        for start in range(0, len(val_pairs) - 7, config.batch_size):
            stop = min(start + config.batch_size, len(val_pairs))
            if stop - start < 8:
                break
            _, rep = elbo_loss(val_x[start:stop], val_y[start:stop], params, rng, config.kl_weight)
            reports.append(rep)
        if not reports:
            raise ContractError("validation set too small for an ELBO batch")
        agg = lambda field_name: float(np.mean([getattr(r, field_name) for r in reports]))
        return ElboReport(agg("kl"), agg("reconstruction"), agg("total"), agg("loss"),
                          agg("mu_sq_mean"), agg("sigma_sq_mean"))

    history: dict = {"train_loss": [], "val_loss": [], "val_elbo": [], "kl": [], "collapsed": False}
    initial = validation_report()
    history["val_loss"].append(initial.loss)
    history["val_elbo"].append(initial.total)
    best_loss = initial.loss
    best_snapshot = [p.data.copy() for p in opt.params]

    global_step = 0
    low_kl_streak = 0
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_pairs))
        epoch_loss, epoch_kl, n_batches = 0.0, 0.0, 0
        for step, start in enumerate(range(0, len(order) - config.batch_size + 1, config.batch_size)):
            idx = order[start:start + config.batch_size]
            if config.kl_anneal_steps > 0:
                weight = config.kl_weight * min(1.0, global_step / config.kl_anneal_steps)
            else:
                weight = config.kl_weight
            with ad.Tape() as tape:
                loss, report = elbo_loss(phi_x[idx], phi_y[idx], params, noise_rng, weight)
            if not np.isfinite(report.loss):
                raise TrainingDiverged("cvae loss is non-finite", epoch=epoch, step=step)
            opt.step(tape.grad(loss, opt.params))
            epoch_loss += report.loss
            epoch_kl += report.kl
            n_batches += 1
            global_step += 1
        mean_kl = epoch_kl / max(n_batches, 1)
        history["train_loss"].append(epoch_loss / max(n_batches, 1))
        history["kl"].append(mean_kl)
        val = validation_report()
        history["val_loss"].append(val.loss)
        history["val_elbo"].append(val.total)
        log.info("cvae epoch %d: train %.4f val %.4f kl %.4f", epoch + 1, history["train_loss"][-1], val.loss, mean_kl)
        if val.loss < best_loss:
            best_loss = val.loss
            best_snapshot = [p.data.copy() for p in opt.params]
        low_kl_streak = low_kl_streak + 1 if mean_kl < COLLAPSE_KL_THRESHOLD else 0
        if low_kl_streak >= COLLAPSE_EPOCHS and not history["collapsed"]:
            history["collapsed"] = True
            warnings.warn(
                f"posterior collapse: mean KL < {COLLAPSE_KL_THRESHOLD} nats for {COLLAPSE_EPOCHS} epochs",
                RuntimeWarning,
            )

    for p, snap in zip(opt.params, best_snapshot):
        p.data[...] = snap
    history["best_val_loss"] = best_loss
    return params, history
