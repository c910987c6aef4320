"""
Central finite-difference checks of every backward rule used by the models.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from . import tensor as T
from .config import GRADCHECK_FLOOR, GRADCHECK_LAYER_TOL, GRADCHECK_MODEL_TOL, GRADCHECK_STEP
from .errors import GradcheckError
from .gan import (
    GanConfig, disc_loss, disc_loss_from_logits, discriminate, discriminator_logits, gen_loss,
    gen_loss_from_logits, generate, init_gan,
)
from .layers import Dense, glorot
from .tensor import SeededRng, Tape, Tensor
from .transformer import (
    EncoderBlockParams, FfnParams, ModelConfig, attention, cross_entropy, encoder_block,
    forward, init_attention, init_model, multi_head, position_ffn,
)

logger = logging.getLogger(__name__)

LossFn = Callable[[], Tensor]


@dataclass
class GradcheckResult:
    group: str
    param: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def describe(self) -> str:
        status = "ok  " if self.passed else "FAIL"
        return f"{status} {self.group:<16} {self.param:<24} max rel err {self.max_rel_error:.2e} (tol {self.tolerance:.0e})"


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = GRADCHECK_FLOOR) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numerical_gradient(loss_fn: LossFn, param: Tensor, h: float = GRADCHECK_STEP) -> np.ndarray:
    """(f(x + h) - f(x - h)) / 2h for every entry of ``param``, restoring it afterwards."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        up = loss_fn().item()
        flat[i] = saved - h
        down = loss_fn().item()
        flat[i] = saved
        out[i] = (up - down) / (2.0 * h)
    return grad


def analytic_gradients(loss_fn: LossFn, params: Sequence[Tensor]) -> List[np.ndarray]:
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
    T.backward(tape, loss, params)
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    for p in params:
        p.grad = None
    return grads


def check_gradients(group: str, loss_fn: LossFn, params: Sequence[Tensor],
                    tolerance: float = GRADCHECK_LAYER_TOL, h: float = GRADCHECK_STEP) -> List[GradcheckResult]:
    """
    Compare tape gradients with central differences for each parameter.

    Args:
        group: Name reported for this check
        loss_fn: Rebuilds the scalar loss from the current parameter values
        params: Tensors (requires_grad) to differentiate with respect to
        tolerance: Maximum accepted relative error
        h: Finite-difference step

    Returns:
        One GradcheckResult per parameter
    """
    results = []
    for i, (p, a) in enumerate(zip(params, analytic_gradients(loss_fn, params))):
        n = numerical_gradient(loss_fn, p, h)
        worst = float(relative_error(a, n).max())
        results.append(GradcheckResult(group, p.name or f"input{i}", worst, tolerance))
    return results


def _leaf(rng: SeededRng, shape, name: str) -> Tensor:
    return Tensor(rng.normal(shape), requires_grad=True, name=name)


def tiny_model_config() -> ModelConfig:
    return ModelConfig(
        head_size=2, num_heads=2, filters=3, num_blocks=1, dropout=0.0,
        input_len=4, num_classes=3, mlp_units=(4,), mlp_dropout=0.0, batch_size=5,
    )


def layer_checks(seed: int = 0, tolerance: float = GRADCHECK_LAYER_TOL) -> List[GradcheckResult]:
    rng = SeededRng(seed)
    results: List[GradcheckResult] = []

    x3 = _leaf(rng, (2, 3, 3), "x")
    w = _leaf(rng, (3, 4), "w")
    r1 = Tensor(rng.normal((2, 3, 4)))
    results += check_gradients("matmul", lambda: T.sum_all(T.mul(T.matmul(x3, w), r1)), [x3, w], tolerance)

    s = _leaf(rng, (3, 5), "scores")
    r2 = Tensor(rng.normal((3, 5)))
    results += check_gradients("softmax_rows", lambda: T.sum_all(T.mul(T.softmax_rows(s), r2)), [s], tolerance)

    q, k, v = _leaf(rng, (4, 2), "Q"), _leaf(rng, (4, 2), "K"), _leaf(rng, (4, 3), "V")
    r3 = Tensor(rng.normal((4, 3)))
    results += check_gradients("attention", lambda: T.sum_all(T.mul(attention(q, k, v), r3)), [q, k, v], tolerance)

    x = _leaf(rng, (2, 4, 3), "x")
    attn = init_attention(rng, 3, 2, 2, "attn")
    r4 = Tensor(rng.normal((2, 4, 3)))
    results += check_gradients("multi_head", lambda: T.sum_all(T.mul(multi_head(x, attn), r4)),
                               [x, *attn.parameters()], tolerance)

    ffn = FfnParams(glorot(rng, 3, 4, "ffn.w1"), _leaf(rng, (4,), "ffn.b1"),
                    glorot(rng, 4, 3, "ffn.w2"), _leaf(rng, (3,), "ffn.b2"))
    results += check_gradients("position_ffn", lambda: T.sum_all(T.mul(position_ffn(x, ffn), r4)),
                               [x, *ffn.parameters()], tolerance)

    gain, bias = _leaf(rng, (3,), "ln.gain"), _leaf(rng, (3,), "ln.bias")
    for axes in (1, 2):
        results += check_gradients(f"layer_norm/{axes}",
                                   lambda axes=axes: T.sum_all(T.mul(T.layer_norm(x, gain, bias, 1e-6, axes), r4)),
                                   [x, gain, bias], tolerance)

    block = EncoderBlockParams(
        ln1_gain=_leaf(rng, (3,), "ln1.gain"), ln1_bias=_leaf(rng, (3,), "ln1.bias"),
        attention=init_attention(rng, 3, 2, 2, "blk.attn"),
        ln2_gain=_leaf(rng, (3,), "ln2.gain"), ln2_bias=_leaf(rng, (3,), "ln2.bias"),
        ffn=FfnParams(glorot(rng, 3, 4, "blk.w1"), _leaf(rng, (4,), "blk.b1"),
                      glorot(rng, 4, 3, "blk.w2"), _leaf(rng, (3,), "blk.b2")),
    )
    results += check_gradients("encoder_block", lambda: T.sum_all(T.mul(encoder_block(x, block), r4)),
                               [x, *block.parameters()], tolerance)

    h = _leaf(rng, (5, 3), "pooled")
    hidden, out = Dense.init(rng, 3, 4, "head.hidden"), Dense.init(rng, 4, 3, "head.out")
    hidden.bias = _leaf(rng, (4,), "head.hidden.b")
    r5 = Tensor(rng.normal((5, 3)))
    results += check_gradients("dense_head", lambda: T.sum_all(T.mul(out(T.relu(hidden(h))), r5)),
                               [h, *hidden.parameters(), *out.parameters()], tolerance)

    logits = _leaf(rng, (5, 4), "logits")
    labels = np.array([0, 3, 1, 1, 2])
    results += check_gradients("cross_entropy", lambda: cross_entropy(T.softmax_rows(logits), labels),
                               [logits], tolerance)
    return results


def gan_checks(seed: int = 0, tolerance: float = GRADCHECK_LAYER_TOL) -> List[GradcheckResult]:
    rng = SeededRng(seed)
    cfg = GanConfig(latent_dim=3, gen_hidden=(4,), disc_hidden=(4,), feature_dim=5, batch_size=6, seed=seed)
    pair = init_gan(cfg, rng, label=0)
    for layer in pair.generator + pair.discriminator:
        layer.bias = Tensor(rng.normal(layer.bias.shape) * 0.1, requires_grad=True, name=layer.bias.name)
    real = Tensor(rng.normal((6, 5)))
    z = Tensor(rng.normal((6, 3)))

    def d_loss() -> Tensor:
        return disc_loss(discriminate(pair, real), discriminate(pair, generate(pair, z)))

    def g_loss() -> Tensor:
        return gen_loss(discriminate(pair, generate(pair, z)))

    def d_logit_loss() -> Tensor:
        return disc_loss_from_logits(discriminator_logits(pair, real),
                                     discriminator_logits(pair, generate(pair, z)))

    def g_logit_loss() -> Tensor:
        return gen_loss_from_logits(discriminator_logits(pair, generate(pair, z)))

    return (
        check_gradients("gan_disc_loss", d_loss, pair.discriminator_parameters(), tolerance)
        + check_gradients("gan_gen_loss", g_loss, pair.generator_parameters(), tolerance)
        + check_gradients("gan_disc_logit_loss", d_logit_loss, pair.discriminator_parameters(), tolerance)
        + check_gradients("gan_gen_logit_loss", g_logit_loss, pair.generator_parameters(), tolerance)
    )


def model_checks(seed: int = 0, tolerance: float = GRADCHECK_MODEL_TOL) -> List[GradcheckResult]:
    rng = SeededRng(seed)
    model = init_model(tiny_model_config(), rng)
    X = rng.normal((5, 4))
    y = np.array([0, 1, 2, 1, 0])
    return check_gradients("classifier", lambda: cross_entropy(forward(X, model), y),
                           model.parameters(), tolerance)


def run_gradcheck_suite(seed: int = 0, layer_tol: float = GRADCHECK_LAYER_TOL,
                        model_tol: float = GRADCHECK_MODEL_TOL) -> List[GradcheckResult]:
    """Layer, GAN-loss and tiny full-classifier checks, in that order."""
    results = layer_checks(seed, layer_tol) + gan_checks(seed, layer_tol) + model_checks(seed, model_tol)
    failed = sum(not r.passed for r in results)
    logger.info("gradcheck: %d parameters checked, %d failed", len(results), failed)
    return results


def assert_passed(results: Sequence[GradcheckResult]) -> None:
    failures = [r for r in results if not r.passed]
    if failures:
        worst = max(failures, key=lambda r: r.max_rel_error)
        raise GradcheckError(
            f"{len(failures)} gradient checks failed; worst {worst.group}/{worst.param} "
            f"rel err {worst.max_rel_error:.2e}"
        )
