"""SRM1 binary model container: named float32 sections + JSON metadata.

Layout (all integers little-endian):

    magic "SRM1" | u32 version | u32 metadata_len | metadata JSON (utf-8)
    u32 section_count
    per section: u16 name_len | name utf-8 | u8 ndim | ndim * u32 dims
                 u64 payload_len | payload (row-major little-endian float32)
    u32 CRC32 over every preceding byte

Loading verifies magic, version, and checksum before returning anything, so
a corrupted file never yields a partial model. Serialization is fully
deterministic for identical inputs (metadata keys are sorted; no wall-clock
fields are injected), which is what makes checkpoint/artifact rebuilds
byte-identical.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import encoder as enc
from .corpus import Vocabulary
from .errors import PersistenceError
from .matching import MatchingModel, TrainConfig
from .mcvae import CvaeConfig, CvaeParams

MAGIC = b"SRM1"
SUPPORTED_VERSION = 1


@dataclass
class ModelContainer:
    metadata: dict
    sections: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = SUPPORTED_VERSION

    def add_section(self, name: str, array: np.ndarray) -> None:
        if name in self.sections:
            raise PersistenceError(f"duplicate section name {name!r}")
        self.sections[name] = np.ascontiguousarray(array, dtype=np.float32)

    def require(self, name: str) -> np.ndarray:
        if name not in self.sections:
            raise PersistenceError(f"missing required section {name!r}")
        return self.sections[name]

    def read_optional(self, name: str, default: np.ndarray) -> np.ndarray:
        """Default-with-warning accessor for sections newer readers expect."""
        if name not in self.sections:
            warnings.warn(f"section {name!r} absent; using default", UserWarning)
            return default
        return self.sections[name]


def to_bytes(container: ModelContainer) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", container.version))
    meta = json.dumps(container.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    buf.write(struct.pack("<I", len(container.sections)))
    for name, array in container.sections.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", array.ndim))
        for dim in array.shape:
            buf.write(struct.pack("<I", dim))
        payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def from_bytes(blob: bytes) -> ModelContainer:
    if len(blob) < len(MAGIC) + 12:
        raise PersistenceError("file too short to be an SRM1 container")
    if blob[:4] != MAGIC:
        raise PersistenceError(f"bad magic {blob[:4]!r}; not an SRM1 container")
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise PersistenceError(f"checksum mismatch: stored {stored_crc:#x}, computed {actual_crc:#x}")

    view = io.BytesIO(blob[4:-4])

    def read(fmt: str, context: str):
        size = struct.calcsize(fmt)
        raw = view.read(size)
        if len(raw) != size:
            raise PersistenceError(f"truncated container while reading {context}")
        return struct.unpack(fmt, raw)

    (version,) = read("<I", "version")
    if version > SUPPORTED_VERSION:
        raise PersistenceError(f"container version {version} is newer than supported {SUPPORTED_VERSION}")
    (meta_len,) = read("<I", "metadata length")
    meta_raw = view.read(meta_len)
    if len(meta_raw) != meta_len:
        raise PersistenceError("truncated container while reading metadata")
    metadata = json.loads(meta_raw.decode("utf-8"))
    container = ModelContainer(metadata=metadata, version=version)
    (n_sections,) = read("<I", "section count")
    for _ in range(n_sections):
        (name_len,) = read("<H", "section name length")
        name_raw = view.read(name_len)
        if len(name_raw) != name_len:
            raise PersistenceError("truncated container while reading a section name")
        name = name_raw.decode("utf-8")
        (ndim,) = read("<B", f"section {name!r} rank")
        shape = tuple(read("<I", f"section {name!r} dims")[0] for _ in range(ndim))
        (payload_len,) = read("<Q", f"section {name!r} payload length")
        payload = view.read(payload_len)
        if len(payload) != payload_len:
            raise PersistenceError(f"truncated container while reading section {name!r}")
        array = np.frombuffer(payload, dtype="<f4").reshape(shape)
        if name in container.sections:
            raise PersistenceError(f"duplicate section name {name!r}")
        container.sections[name] = np.ascontiguousarray(array)
    return container


def save_model(path: str | Path, container: ModelContainer) -> None:
    Path(path).write_bytes(to_bytes(container))


def load_model(path: str | Path) -> ModelContainer:
    return from_bytes(Path(path).read_bytes())


def container_hash(container: ModelContainer) -> str:
    return hashlib.sha256(to_bytes(container)).hexdigest()[:16]


# --------------------------------------------------------------------------
# Typed adapters


def matching_to_container(model: MatchingModel, extra_metadata: dict | None = None) -> ModelContainer:
    metadata = {
        "kind": "smartreply-model",
        "config": model.config.to_dict(),
        "vocab": model.vocab.surfaces,
        "vocab_min_frequency": model.vocab.min_frequency,
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    container = ModelContainer(metadata=metadata)
    for name, tensor in model.named_tensors().items():
        container.add_section(name, tensor.data)
    return container


def attach_cvae(container: ModelContainer, params: CvaeParams, config: CvaeConfig) -> ModelContainer:
    container.metadata["cvae_config"] = config.to_dict()
    container.metadata["cvae_dims"] = {"z_dim": params.z_dim, "hidden": params.hidden, "d": params.d}
    for name, tensor in params.named_tensors().items():
        container.add_section(name, tensor.data)
    return container


def _rebuild_encoder(config: enc.EncoderConfig, container: ModelContainer, prefix: str, embedding: np.ndarray) -> enc.EncoderParams:
    from .autodiff import Tensor

    params = enc.EncoderParams(config=config, embedding=Tensor(embedding))
    if config.variant == enc.BI_RECURRENT:
        for li in range(config.layers):
            layer = {}
            for direction in ("fwd", "bwd"):
                layer[direction] = enc.LstmCell(
                    wx=Tensor(container.require(f"{prefix}.l{li}.{direction}.wx")),
                    wh=Tensor(container.require(f"{prefix}.l{li}.{direction}.wh")),
                    b=Tensor(container.require(f"{prefix}.l{li}.{direction}.b")),
                )
            params.cells.append(layer)
    else:
        for li in range(config.layers):
            params.ff_layers.append(
                (Tensor(container.require(f"{prefix}.ff{li}.w")), Tensor(container.require(f"{prefix}.ff{li}.b")))
            )
        params.ff_out = (Tensor(container.require(f"{prefix}.out.w")), Tensor(container.require(f"{prefix}.out.b")))
    return params


def matching_from_container(container: ModelContainer) -> MatchingModel:
    config = TrainConfig.from_dict(container.metadata["config"])
    vocab = Vocabulary(
        surfaces=list(container.metadata["vocab"]),
        frequencies={},
        min_frequency=int(container.metadata.get("vocab_min_frequency", 1)),
    )
    message_encoder = _rebuild_encoder(config.encoder, container, "msg", container.require("msg.embedding"))
    reply_embedding = (
        message_encoder.embedding.data if config.share_embedding else container.require("rep.embedding")
    )
    reply_encoder = _rebuild_encoder(config.encoder, container, "rep", reply_embedding)
    if config.share_embedding:
        reply_encoder.embedding = message_encoder.embedding
    model = MatchingModel(vocab, config, message_encoder, reply_encoder)

    expected = set(model.named_tensors())
    expected |= {n for n in container.sections if n.startswith("cvae.")}
    unknown = set(container.sections) - expected
    if unknown:
        raise PersistenceError(f"unknown section {sorted(unknown)[0]!r} in container")
    return model


def cvae_from_container(container: ModelContainer) -> CvaeParams | None:
    from .autodiff import Tensor

    if "cvae_config" not in container.metadata:
        return None
    dims = container.metadata["cvae_dims"]
    names = ("w_mu1", "b_mu1", "w_mu2", "b_mu2", "w_sigma2", "b_sigma2",
             "w_dec1", "b_dec1", "w_dec2", "b_dec2")
    return CvaeParams(
        z_dim=int(dims["z_dim"]), hidden=int(dims["hidden"]), d=int(dims["d"]),
        **{n: Tensor(container.require(f"cvae.{n}")) for n in names},
    )


def load_full(path: str | Path) -> tuple[MatchingModel, CvaeParams | None, ModelContainer]:
    container = load_model(path)
    model = matching_from_container(container)
    return model, cvae_from_container(container), container
