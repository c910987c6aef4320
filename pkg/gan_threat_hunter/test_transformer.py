"""
Tests for the transformer-encoder classifier.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from . import tensor as T
from .data_pipeline import LabelCodec, LabeledDataset
from .errors import ConfigError, DimensionError, EmptyDatasetError, LabelError
from .gradcheck import model_checks
from .layers import glorot
from .tensor import SeededRng, Tensor
from .transformer import (
    AttentionParams, EncoderBlockParams, FfnParams, ModelConfig, argmax_rows, attention,
    cross_entropy, encoder_block, evaluate_split, forward, forward_logits, init_model,
    multi_head, position_ffn, predict, predict_proba, train,
)


def small_config(**overrides) -> ModelConfig:
    settings = dict(head_size=4, num_heads=2, filters=4, num_blocks=1, dropout=0.0,
                    mlp_units=(8,), mlp_dropout=0.0, batch_size=16, epochs=1)
    settings.update(overrides)
    return ModelConfig(**settings)


def const(values) -> Tensor:
    return Tensor(values)


def test_model_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(channels=2)
    with pytest.raises(ConfigError):
        ModelConfig(dropout=1.0)
    with pytest.raises(ConfigError):
        ModelConfig(pooling="max")
    with pytest.raises(ConfigError):
        ModelConfig(num_heads=0)
    cfg = ModelConfig()
    assert (cfg.input_len, cfg.num_classes, cfg.channels) == (95, 15, 1)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_attention_single_key():
    out = attention(const([[0.0]]), const([[0.0]]), const([[5.0]]))
    assert_allclose(out.data, [[5.0]])


def test_attention_identical_keys_average_values():
    rng = SeededRng(1)
    Q = const(rng.normal((3, 2)))
    K = const(np.tile(rng.normal((1, 2)), (3, 1)))
    V = const(rng.normal((3, 4)))
    assert_allclose(attention(Q, K, V).data, np.tile(V.data.mean(axis=0), (3, 1)), atol=1e-12)


def test_attention_matches_three_step_oracle():
    rng = SeededRng(2)
    Q, K, V = rng.normal((3, 2)), rng.normal((3, 2)), rng.normal((3, 2))
    scores = Q @ K.T / math.sqrt(2)
    weights = np.exp(scores - scores.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    assert_allclose(attention(const(Q), const(K), const(V)).data, weights @ V, atol=1e-12)


def test_attention_shape_mismatch():
    with pytest.raises(DimensionError):
        attention(const(np.ones((3, 2))), const(np.ones((3, 4))), const(np.ones((3, 2))))


def test_multi_head_single_identity_head_is_attention():
    x = const([[0.5], [-1.0], [2.0]])
    one = lambda: const([[1.0]])
    p = AttentionParams([one()], [one()], [one()], one())
    assert_allclose(multi_head(x, p).data, attention(x, x, x).data, atol=1e-12)


def test_multi_head_zero_weights_give_zeros():
    rng = SeededRng(3)
    zero = lambda shape: const(np.zeros(shape))
    p = AttentionParams([zero((1, 4))] * 2, [zero((1, 4))] * 2, [zero((1, 4))] * 2, zero((8, 1)))
    assert_array_equal(multi_head(const(rng.normal((5, 1))), p).data, np.zeros((5, 1)))


def test_multi_head_is_concat_of_heads():
    rng = SeededRng(4)
    x = const(rng.normal((6, 3)))
    proj = lambda name: glorot(rng, 3, 2, name)
    p = AttentionParams([proj("q0"), proj("q1")], [proj("k0"), proj("k1")],
                        [proj("v0"), proj("v1")], glorot(rng, 4, 3, "wo"))
    heads = [
        attention(T.matmul(x, p.wq[i]), T.matmul(x, p.wk[i]), T.matmul(x, p.wv[i])).data
        for i in range(2)
    ]
    assert_allclose(multi_head(x, p).data, np.hstack(heads) @ p.wo.data, atol=1e-12)


def test_position_ffn_cases():
    identity = FfnParams(const([[1.0]]), const([0.0]), const([[1.0]]), const([0.0]))
    assert_allclose(position_ffn(const([[-1.0], [2.0]]), identity).data, [[0.0], [2.0]])

    zero = FfnParams(const(np.zeros((1, 3))), const(np.zeros(3)), const(np.zeros((3, 1))), const([4.5]))
    assert_allclose(position_ffn(const([[-1.0], [2.0], [7.0]]), zero).data, [[4.5]] * 3)


def test_position_ffn_is_permutation_equivariant():
    rng = SeededRng(5)
    p = FfnParams(glorot(rng, 2, 5, "w1"), const(rng.normal(5)), glorot(rng, 5, 2, "w2"), const(rng.normal(2)))
    x = rng.normal((7, 2))
    perm = rng.permutation(7)
    assert_allclose(position_ffn(const(x[perm]), p).data, position_ffn(const(x), p).data[perm], atol=1e-12)


def test_layer_norm_examples():
    zero, one = const([0.0, 0.0, 0.0]), const([1.0, 1.0, 1.0])
    assert_allclose(T.layer_norm(const([[1.0, 1.0, 1.0]]), one, zero).data, [[0.0, 0.0, 0.0]])
    out = T.layer_norm(const([[1.0, 3.0]]), const([1.0, 1.0]), const([0.0, 0.0]), eps=1e-12)
    assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-9)


def test_layer_norm_moments():
    rng = SeededRng(6)
    x = const(rng.normal((4, 50)) * 3 + 1)
    out = T.layer_norm(x, const(np.full(50, 2.0)), const(np.full(50, 0.5))).data
    assert_allclose(out.mean(axis=1), np.full(4, 0.5), atol=1e-6)
    assert_allclose(out.var(axis=1), np.full(4, 4.0), atol=1e-5)


def _block(rng: SeededRng, zero_weights: bool = False, dropout: float = 0.0) -> EncoderBlockParams:
    make = (lambda shape, name: const(np.zeros(shape))) if zero_weights else (lambda shape, name: glorot(rng, shape[0], shape[1], name))
    return EncoderBlockParams(
        ln1_gain=const([1.0]), ln1_bias=const([0.0]),
        attention=AttentionParams([make((1, 4), "q")], [make((1, 4), "k")], [make((1, 4), "v")], make((4, 1), "o")),
        ln2_gain=const([1.0]), ln2_bias=const([0.0]),
        ffn=FfnParams(make((1, 3), "w1"), const(np.zeros(3)), make((3, 1), "w2"), const([0.0])),
        dropout=dropout,
    )


def test_encoder_block_zero_weights_is_identity():
    rng = SeededRng(7)
    x = const(rng.normal((95, 1)))
    assert_allclose(encoder_block(x, _block(rng, zero_weights=True)).data, x.data, atol=1e-12)


def test_encoder_block_dropout_zero_training_equals_eval():
    rng = SeededRng(8)
    block = _block(rng)
    x = const(rng.normal((95, 1)))
    trained = encoder_block(x, block, training=True, rng=SeededRng(1)).data
    assert_array_equal(trained, encoder_block(x, block).data)


def test_encoder_block_matches_composed_sub_ops():
    rng = SeededRng(9)
    p = _block(rng)
    x = const(rng.normal((95, 1)))
    a = x.data + multi_head(T.layer_norm(x, p.ln1_gain, p.ln1_bias, p.eps, axes=2), p.attention).data
    ln2 = T.layer_norm(const(a), p.ln2_gain, p.ln2_bias, p.eps, axes=2)
    expected = a + position_ffn(ln2, p.ffn).data
    assert_allclose(encoder_block(x, p).data, expected, atol=1e-12)


def test_encoder_block_rejects_wrong_width():
    with pytest.raises(DimensionError):
        encoder_block(const(np.ones((95, 2))), _block(SeededRng(0)))


def test_forward_outputs_distributions():
    rng = SeededRng(10)
    model = init_model(small_config(), rng)
    X = rng.normal((6, 95))
    X[3] = X[1]
    probs = forward(X, model).data
    assert probs.shape == (6, 15)
    assert_allclose(probs.sum(axis=1), np.ones(6), atol=1e-9)
    assert (probs >= 0).all()
    assert_array_equal(probs[3], probs[1])


def test_forward_wrong_width_names_feature_count():
    model = init_model(small_config(), SeededRng(0))
    with pytest.raises(DimensionError) as info:
        forward(np.zeros((2, 94)), model)
    assert "95" in str(info.value)


def test_pooled_logits_invariant_to_position_permutation():
    """No positional encoding, width-1 FFN and slab layer norm make the pooled logits order-free."""
    rng = SeededRng(11)
    model = init_model(small_config(num_blocks=2), rng)
    X = rng.normal((4, 95))
    perm = rng.permutation(95)
    assert_allclose(forward_logits(X[:, perm], model).data, forward_logits(X, model).data, atol=1e-9)


def test_channel_pooling_head_width():
    model = init_model(small_config(pooling="channels"), SeededRng(0))
    assert model.head.hidden[0].fan_in == 95
    assert forward(np.zeros((2, 95)), model).shape == (2, 15)


def test_init_model_is_seed_deterministic():
    a = init_model(small_config(), SeededRng(3))
    b = init_model(small_config(), SeededRng(3))
    for (name_a, pa), (name_b, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert name_a == name_b
        assert_array_equal(pa.data, pb.data)
    names = [name for name, _ in a.named_parameters()]
    assert len(names) == len(set(names))


def test_cross_entropy_closed_forms():
    perfect = np.zeros((2, 15))
    perfect[0, 3] = perfect[1, 7] = 1.0
    assert cross_entropy(const(perfect), [3, 7]).item() == pytest.approx(0.0, abs=1e-15)
    uniform = np.full((4, 15), 1.0 / 15)
    assert cross_entropy(const(uniform), [0, 5, 9, 14]).item() == pytest.approx(math.log(15), abs=1e-12)
    clamped = cross_entropy(const(np.eye(15)[[0]]), [1]).item()
    assert clamped == pytest.approx(-math.log(1e-12))


def test_cross_entropy_label_range():
    with pytest.raises(LabelError):
        cross_entropy(const(np.full((1, 15), 1.0 / 15)), [15])
    with pytest.raises(LabelError):
        cross_entropy(const(np.full((1, 15), 1.0 / 15)), [-1])


def test_argmax_ties_go_to_lowest_index():
    row = np.zeros((1, 15))
    row[0, 2] = row[0, 7] = 0.5
    assert argmax_rows(row).tolist() == [2]
    second = np.zeros((1, 15))
    second[0, :2] = [0.1, 0.9]
    assert argmax_rows(second).tolist() == [1]


def test_predict_agrees_with_forward():
    rng = SeededRng(12)
    model = init_model(small_config(), rng)
    X = rng.normal((20, 95))
    assert_array_equal(predict(model, X, batch_size=7), np.argmax(forward(X, model).data, axis=1))
    assert_allclose(predict_proba(model, X, batch_size=3), forward(X, model).data, atol=1e-12)
    with pytest.raises(DimensionError):
        predict(model, np.zeros((3, 10)))


def _separable(n: int, seed: int):
    rng = SeededRng(seed)
    y = np.arange(n) % 2
    X = rng.normal((n, 95)) + np.where(y == 1, 2.0, -2.0)[:, None]
    return LabeledDataset(X, y, LabelCodec.edge_iiot())


def test_train_epochs_zero_leaves_model():
    cfg = small_config(epochs=0)
    model = init_model(cfg, SeededRng(0))
    before = [p.data.copy() for p in model.parameters()]
    history = train(model, _separable(20, 0), cfg, SeededRng(1))
    assert len(history) == 0
    for b, p in zip(before, model.parameters()):
        assert_array_equal(b, p.data)


def test_train_empty_dataset():
    cfg = small_config()
    empty = LabeledDataset(np.zeros((0, 95)), np.zeros(0, dtype=int), LabelCodec.edge_iiot())
    with pytest.raises(EmptyDatasetError):
        train(init_model(cfg, SeededRng(0)), empty, cfg, SeededRng(0))


def test_train_learns_separable_task():
    """2 epochs on 200 linearly separable rows."""
    cfg = small_config(epochs=2, batch_size=10, learning_rate=1e-2)
    data = _separable(200, 13)
    model = init_model(cfg, SeededRng(13))
    history = train(model, data, cfg, SeededRng(14), test_set=_separable(40, 15))
    assert len(history) == 2
    assert history.records[-1].train_loss < history.records[0].train_loss
    assert history.records[-1].test_acc is not None
    _, acc = evaluate_split(model, data)
    assert acc > 0.95


def test_train_is_seed_deterministic():
    cfg = small_config(epochs=1, batch_size=8, dropout=0.1, mlp_dropout=0.1)
    data = _separable(40, 2)
    runs = []
    for _ in range(2):
        model = init_model(cfg, SeededRng(5))
        history = train(model, data, cfg, SeededRng(6))
        runs.append((history.to_csv(), [p.data.copy() for p in model.parameters()]))
    assert runs[0][0] == runs[1][0]
    for a, b in zip(runs[0][1], runs[1][1]):
        assert_array_equal(a, b)


def test_tiny_model_gradients():
    """L=4, head_size=2, heads=2, filters=3, one block."""
    for result in model_checks():
        assert result.passed, result.describe()
