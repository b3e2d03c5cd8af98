"""Retrieval-based smart reply engine with latent-intent diversification."""

from .autodiff import Rng, Tape, Tensor, grad_check, sample_gaussian
from .corpus import MessageReplyPair, Vocabulary, build_vocabulary, split_pairs, tokenize
from .inference import (
    PipelineConfig,
    ResponseSetArtifact,
    SuggestEngine,
    build_response_set,
    load_artifact,
    save_artifact,
)
from .matching import MatchingModel, TrainConfig, match_score, symmetric_loss, train_matching
from .mcvae import CvaeConfig, CvaeParams, elbo_loss, train_cvae
from .ngram_lm import NgramLm, lm_score, train_lm
from .persistence import ModelContainer, load_full, load_model, save_model
from .synthetic import SyntheticConfig, default_config, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "CvaeConfig",
    "CvaeParams",
    "MatchingModel",
    "MessageReplyPair",
    "ModelContainer",
    "NgramLm",
    "PipelineConfig",
    "ResponseSetArtifact",
    "Rng",
    "SuggestEngine",
    "SyntheticConfig",
    "Tape",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "build_response_set",
    "build_vocabulary",
    "default_config",
    "elbo_loss",
    "generate_synthetic",
    "grad_check",
    "lm_score",
    "load_artifact",
    "load_full",
    "load_model",
    "match_score",
    "sample_gaussian",
    "save_artifact",
    "save_model",
    "split_pairs",
    "symmetric_loss",
    "tokenize",
    "train_cvae",
    "train_lm",
    "train_matching",
]
