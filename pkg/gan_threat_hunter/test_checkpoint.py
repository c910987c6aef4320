"""
Tests for checkpoint save/load.
"""
import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data_pipeline import LabelCodec, LabeledDataset, StandardizationStats
from .errors import CheckpointError
from .tensor import SeededRng
from .transformer import ModelConfig, init_model, predict, predict_proba, train

CODEC = LabelCodec(("Normal", "DDoS_UDP", "MITM"))


def small_config(**overrides) -> ModelConfig:
    settings = dict(head_size=4, num_heads=2, filters=4, num_blocks=1, dropout=0.0,
                    input_len=6, num_classes=3, mlp_units=(8,), mlp_dropout=0.0,
                    batch_size=8, epochs=1, learning_rate=1e-2)
    settings.update(overrides)
    return ModelConfig(**settings)


def trained_checkpoint(seed: int = 5) -> Checkpoint:
    rng = SeededRng(seed)
    X = rng.normal((30, 6))
    y = np.arange(30) % 3
    cfg = small_config()
    model = init_model(cfg, rng)
    train(model, LabeledDataset(X, y, CODEC), cfg, rng.spawn(1))
    stats = StandardizationStats(X.mean(axis=0), X.std(axis=0))
    return Checkpoint(model=model, codec=CODEC, seed=seed, stats=stats,
                      feature_names=[f"f{i}" for i in range(6)])


def test_round_trip_reproduces_predictions(tmp_path):
    ckpt = trained_checkpoint()
    path = save_checkpoint(tmp_path / "model.json", ckpt)
    loaded = load_checkpoint(path)
    X = SeededRng(9).normal((12, 6))
    assert_array_equal(predict_proba(loaded.model, X), predict_proba(ckpt.model, X))
    assert_array_equal(predict(loaded.model, X), predict(ckpt.model, X))
    assert loaded.codec == CODEC
    assert loaded.model.config == ckpt.model.config
    assert loaded.feature_names == ckpt.feature_names
    assert_array_equal(loaded.stats.std, ckpt.stats.std)


def test_saving_twice_is_byte_identical(tmp_path):
    ckpt = trained_checkpoint()
    a = save_checkpoint(tmp_path / "a.json", ckpt).read_bytes()
    b = save_checkpoint(tmp_path / "b.json", load_checkpoint(tmp_path / "a.json")).read_bytes()
    assert a == b


def rewrite(path, **changes):
    payload = json.loads(path.read_text())
    payload.update(changes)
    path.write_text(json.dumps(payload))


def test_load_rejects_foreign_files(tmp_path):
    path = save_checkpoint(tmp_path / "model.json", trained_checkpoint())
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "absent.json")

    rewrite(path, version=2)
    with pytest.raises(CheckpointError) as info:
        load_checkpoint(path)
    assert "version 2" in str(info.value)

    rewrite(path, version=1, format="someone-else")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

    (tmp_path / "junk.json").write_text("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.json")


def test_load_rejects_mismatched_parameters(tmp_path):
    path = save_checkpoint(tmp_path / "model.json", trained_checkpoint())
    payload = json.loads(path.read_text())
    payload["config"]["filters"] = 5
    path.write_text(json.dumps(payload))
    with pytest.raises(CheckpointError) as info:
        load_checkpoint(path)
    assert "ffn" in str(info.value)

    payload["config"]["filters"] = 4
    payload["parameters"] = payload["parameters"][:-1]
    path.write_text(json.dumps(payload))
    with pytest.raises(CheckpointError) as info:
        load_checkpoint(path)
    assert "head.out" in str(info.value)


def test_codec_check():
    ckpt = trained_checkpoint()
    ckpt.check_codec(LabelCodec(("Normal", "DDoS_UDP", "MITM")))
    with pytest.raises(CheckpointError):
        ckpt.check_codec(LabelCodec(("Normal", "MITM", "DDoS_UDP")))
