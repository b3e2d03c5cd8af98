"""SRM1 container round-trips, corruption detection, typed adapters."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from conftest import quick_train_config, two_intent_corpus
from smartreply import corpus, matching, mcvae, persistence
from smartreply.autodiff import Rng
from smartreply.errors import PersistenceError


def _container(seed=1):
    rng = Rng(seed)
    c = persistence.ModelContainer(metadata={"kind": "test", "seed": seed})
    c.add_section("alpha", rng.standard_normal((3, 4)))
    c.add_section("beta", rng.standard_normal((7,)))
    c.add_section("gamma", rng.standard_normal((2, 2, 2)))
    return c


def test_round_trip_bitwise(tmp_path):
    c = _container()
    path = tmp_path / "model.srm"
    persistence.save_model(path, c)
    loaded = persistence.load_model(path)
    assert loaded.metadata == c.metadata
    assert list(loaded.sections) == list(c.sections)
    for name, arr in c.sections.items():
        assert loaded.sections[name].tobytes() == arr.tobytes()
        assert loaded.sections[name].shape == arr.shape


def test_serialization_deterministic():
    assert persistence.to_bytes(_container()) == persistence.to_bytes(_container())


def test_every_corrupted_byte_detected(tmp_path):
    blob = bytearray(persistence.to_bytes(_container()))
    rng = Rng(9)
    for _ in range(30):
        pos = int(rng.integers(0, len(blob)))
        original = blob[pos]
        blob[pos] ^= 0xFF
        with pytest.raises(PersistenceError):
            persistence.from_bytes(bytes(blob))
        blob[pos] = original


def test_truncation_reported(tmp_path):
    blob = persistence.to_bytes(_container())
    with pytest.raises(PersistenceError):
        persistence.from_bytes(blob[: len(blob) // 2])


def test_bad_magic_rejected():
    blob = b"XXXX" + persistence.to_bytes(_container())[4:]
    with pytest.raises(PersistenceError, match="magic"):
        persistence.from_bytes(blob)


def test_future_version_rejected():
    blob = bytearray(persistence.to_bytes(_container()))
    blob[4:8] = struct.pack("<I", 99)
    body = bytes(blob[:-4])
    import zlib

    blob[-4:] = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    with pytest.raises(PersistenceError, match="version"):
        persistence.from_bytes(bytes(blob))


def test_duplicate_section_rejected():
    c = _container()
    with pytest.raises(PersistenceError, match="duplicate"):
        c.add_section("alpha", np.zeros(2, dtype=np.float32))


def test_optional_section_defaults_with_warning(tmp_path):
    # a v1 file written without the optional section an updated reader wants
    c = persistence.ModelContainer(metadata={"kind": "compat"})
    c.add_section("core", np.ones(3, dtype=np.float32))
    path = tmp_path / "old.srm"
    persistence.save_model(path, c)
    loaded = persistence.load_model(path)
    default = np.zeros(2, dtype=np.float32)
    with pytest.warns(UserWarning, match="absent"):
        got = loaded.read_optional("extras.bias", default)
    np.testing.assert_array_equal(got, default)
    # present section does not warn
    import warnings as w

    with w.catch_warnings():
        w.simplefilter("error")
        np.testing.assert_array_equal(loaded.read_optional("core", default), np.ones(3))


@pytest.fixture(scope="module")
def small_model():
    pairs = two_intent_corpus(256)
    train, val = corpus.split_pairs(pairs, 0.1, seed=5)
    vocab = corpus.build_vocabulary(pairs, min_frequency=1)
    model, _ = matching.train_matching(train, val, vocab, quick_train_config(epochs=2))
    return model, train, val


def test_matching_model_round_trip(tmp_path, small_model):
    model, train, val = small_model
    path = tmp_path / "model.srm"
    persistence.save_model(path, persistence.matching_to_container(model))
    loaded, cvae_params, _ = persistence.load_full(path)
    assert cvae_params is None
    assert loaded.vocab.surfaces == model.vocab.surfaces
    for name, tensor in model.named_tensors().items():
        assert loaded.named_tensors()[name].data.tobytes() == tensor.data.tobytes(), name
    ids = model.vocab.encode(train[0].message)
    np.testing.assert_array_equal(loaded.encode_message(ids), model.encode_message(ids))


def test_shared_embedding_restored_as_one_object(tmp_path, small_model):
    model, *_ = small_model
    path = tmp_path / "model.srm"
    persistence.save_model(path, persistence.matching_to_container(model))
    loaded, _, _ = persistence.load_full(path)
    assert loaded.message_encoder.embedding is loaded.reply_encoder.embedding


def test_cvae_attach_round_trip(tmp_path, small_model):
    model, train, val = small_model
    cfg = mcvae.CvaeConfig(z_dim=4, hidden=8, epochs=1, batch_size=32, seed=1)
    params, _ = mcvae.train_cvae(model, train, val, cfg)
    container = persistence.matching_to_container(model)
    persistence.attach_cvae(container, params, cfg)
    path = tmp_path / "full.srm"
    persistence.save_model(path, container)
    loaded_model, loaded_cvae, _ = persistence.load_full(path)
    assert loaded_cvae is not None
    for name, tensor in params.named_tensors().items():
        assert loaded_cvae.named_tensors()[name].data.tobytes() == tensor.data.tobytes()
    rng = Rng(3)
    z = rng.standard_normal((4, params.z_dim))
    x = rng.standard_normal(params.d)
    np.testing.assert_array_equal(mcvae.decode_np(params, z, x), mcvae.decode_np(loaded_cvae, z, x))


def test_unknown_section_rejected_by_typed_loader(tmp_path, small_model):
    model, *_ = small_model
    container = persistence.matching_to_container(model)
    container.add_section("mystery.blob", np.zeros(3, dtype=np.float32))
    blob = persistence.to_bytes(container)
    with pytest.raises(PersistenceError, match="mystery.blob"):
        persistence.matching_from_container(persistence.from_bytes(blob))


def test_container_hash_stable_and_sensitive():
    a, b = _container(seed=1), _container(seed=1)
    assert persistence.container_hash(a) == persistence.container_hash(b)
    c = _container(seed=2)
    assert persistence.container_hash(a) != persistence.container_hash(c)
