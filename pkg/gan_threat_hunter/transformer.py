"""
Transformer-encoder classifier over standardized flow features.

Each of the input features is one sequence position with channel width 1.
Encoder blocks are pre-norm: LayerNorm -> multi-head self-attention ->
dropout -> residual, then LayerNorm -> position-wise feed-forward (a width-1
convolution) -> dropout -> residual. A global average pool feeds a dense
softmax head. There is no positional encoding.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import tensor as T
from .config import (
    ADAM_BETA1, ADAM_BETA2, ADAM_EPS, BATCH_SIZE, CHANNELS, DROPOUT, EPOCHS,
    FEATURE_DIM, FILTERS, HEAD_SIZE, LAYER_NORM_EPS, LEARNING_RATE, MLP_DROPOUT,
    MLP_UNITS, NUM_BLOCKS, NUM_CLASSES, NUM_HEADS, POOLING, PROB_CLAMP,
)
from .data_pipeline import LabeledDataset
from .errors import ConfigError, DimensionError, EmptyDatasetError, LabelError
from .layers import Dense, glorot, ones, stack_dense, zeros
from .metrics import EpochRecord, TrainingHistory
from .optim import Adam
from .tensor import SeededRng, Tape, Tensor

logger = logging.getLogger(__name__)

POOLING_MODES = ("positions", "channels")


@dataclass
class ModelConfig:
    """Hyperparameters of the classifier and its training loop."""
    head_size: int = HEAD_SIZE
    num_heads: int = NUM_HEADS
    filters: int = FILTERS
    num_blocks: int = NUM_BLOCKS
    dropout: float = DROPOUT
    input_len: int = FEATURE_DIM
    channels: int = CHANNELS
    num_classes: int = NUM_CLASSES
    mlp_units: Tuple[int, ...] = MLP_UNITS
    mlp_dropout: float = MLP_DROPOUT
    learning_rate: float = LEARNING_RATE
    batch_size: int = BATCH_SIZE
    epochs: int = EPOCHS
    pooling: str = POOLING
    layer_norm_eps: float = LAYER_NORM_EPS

    def __post_init__(self):
        self.mlp_units = tuple(int(u) for u in self.mlp_units)
        self.validate()

    def validate(self) -> None:
        for name in ("head_size", "num_heads", "filters", "input_len", "num_classes", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.num_blocks < 0 or self.epochs < 0:
            raise ConfigError("num_blocks and epochs must be >= 0")
        if self.channels != 1:
            raise ConfigError(f"channels is fixed at 1 (one feature per position), got {self.channels}")
        for name in ("dropout", "mlp_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {getattr(self, name)}")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if any(u < 1 for u in self.mlp_units):
            raise ConfigError(f"mlp_units must be positive, got {self.mlp_units}")
        if self.learning_rate <= 0 or self.layer_norm_eps <= 0:
            raise ConfigError("learning_rate and layer_norm_eps must be positive")

    @property
    def pooled_width(self) -> int:
        return self.channels if self.pooling == "positions" else self.input_len

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_units"] = list(self.mlp_units)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class AttentionParams:
    """Per-head projections W_i^Q, W_i^K, W_i^V and the output projection W^O."""
    wq: List[Tensor]
    wk: List[Tensor]
    wv: List[Tensor]
    wo: Tensor

    @property
    def num_heads(self) -> int:
        return len(self.wq)

    def parameters(self) -> List[Tensor]:
        return [*self.wq, *self.wk, *self.wv, self.wo]


@dataclass
class FfnParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def parameters(self) -> List[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class EncoderBlockParams:
    ln1_gain: Tensor
    ln1_bias: Tensor
    attention: AttentionParams
    ln2_gain: Tensor
    ln2_bias: Tensor
    ffn: FfnParams
    dropout: float = 0.0
    eps: float = LAYER_NORM_EPS

    def parameters(self) -> List[Tensor]:
        return [
            self.ln1_gain, self.ln1_bias, *self.attention.parameters(),
            self.ln2_gain, self.ln2_bias, *self.ffn.parameters(),
        ]


@dataclass
class ClassifierHead:
    """Dense layers after pooling; ``output`` is the final num_classes-wide layer."""
    hidden: List[Dense]
    output: Dense
    dropout: float = 0.0

    def parameters(self) -> List[Tensor]:
        params = [p for layer in self.hidden for p in layer.parameters()]
        return params + self.output.parameters()


@dataclass
class TransformerClassifier:
    config: ModelConfig
    blocks: List[EncoderBlockParams]
    head: ClassifierHead

    def parameters(self) -> List[Tensor]:
        params = [p for block in self.blocks for p in block.parameters()]
        return params + self.head.parameters()

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return [(p.name, p) for p in self.parameters()]


def init_attention(rng: SeededRng, channels: int, head_size: int, num_heads: int, name: str) -> AttentionParams:
    def proj(kind: str) -> List[Tensor]:
        return [glorot(rng, channels, head_size, f"{name}.w{kind}{i}") for i in range(num_heads)]

    wq, wk, wv = proj("q"), proj("k"), proj("v")
    wo = glorot(rng, num_heads * head_size, channels, f"{name}.wo")
    return AttentionParams(wq=wq, wk=wk, wv=wv, wo=wo)


def init_model(cfg: ModelConfig, rng: SeededRng) -> TransformerClassifier:
    """Build a freshly initialized classifier; deterministic per rng seed."""
    c = cfg.channels
    blocks = []
    for b in range(cfg.num_blocks):
        name = f"block{b}"
        blocks.append(EncoderBlockParams(
            ln1_gain=ones((c,), f"{name}.ln1.gain"),
            ln1_bias=zeros((c,), f"{name}.ln1.bias"),
            attention=init_attention(rng, c, cfg.head_size, cfg.num_heads, f"{name}.attn"),
            ln2_gain=ones((c,), f"{name}.ln2.gain"),
            ln2_bias=zeros((c,), f"{name}.ln2.bias"),
            ffn=FfnParams(
                w1=glorot(rng, c, cfg.filters, f"{name}.ffn.w1"),
                b1=zeros((cfg.filters,), f"{name}.ffn.b1"),
                w2=glorot(rng, cfg.filters, c, f"{name}.ffn.w2"),
                b2=zeros((c,), f"{name}.ffn.b2"),
            ),
            dropout=cfg.dropout,
            eps=cfg.layer_norm_eps,
        ))
    widths = [cfg.pooled_width, *cfg.mlp_units]
    hidden = stack_dense(rng, widths, "head.hidden")
    output = Dense.init(rng, widths[-1], cfg.num_classes, "head.out")
    return TransformerClassifier(cfg, blocks, ClassifierHead(hidden, output, cfg.mlp_dropout))


# ------------------------------------------------------------------ sub-layers

def attention(Q: Tensor, K: Tensor, V: Tensor) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V over the last two axes."""
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2]:
        raise DimensionError(f"attention: Q {Q.shape}, K {K.shape}, V {V.shape} do not fit")
    d_k = Q.shape[-1]
    scores = T.scale(T.matmul(Q, T.transpose(K)), 1.0 / math.sqrt(d_k))
    return T.matmul(T.softmax_rows(scores), V)


def multi_head(x: Tensor, p: AttentionParams) -> Tensor:
    """Self-attention: Concat(h_1..h_h) W^O with h_i = Att(x W_i^Q, x W_i^K, x W_i^V)."""
    if x.shape[-1] != p.wq[0].shape[0]:
        raise DimensionError(f"multi_head: input {x.shape} does not fit projections {p.wq[0].shape}")
    heads = [
        attention(T.matmul(x, wq), T.matmul(x, wk), T.matmul(x, wv))
        for wq, wk, wv in zip(p.wq, p.wk, p.wv)
    ]
    return T.matmul(T.concat(heads, axis=-1), p.wo)


def position_ffn(x: Tensor, p: FfnParams) -> Tensor:
    """max(0, x W_1 + b_1) W_2 + b_2 applied at every position independently."""
    hidden = T.relu(T.add_bias(T.matmul(x, p.w1), p.b1))
    return T.add_bias(T.matmul(hidden, p.w2), p.b2)


def encoder_block(x: Tensor, p: EncoderBlockParams, training: bool = False,
                  rng: Optional[SeededRng] = None) -> Tensor:
    """
    One pre-norm encoder block.

    Args:
        x: Sequence of shape (L, C) or batch of shape (B, L, C)
        p: Block parameters
        training: Enables dropout
        rng: Dropout randomness (required when training with dropout > 0)

    Returns:
        Tensor with the shape of x
    """
    if x.data.ndim < 2 or x.shape[-1] != p.ln1_gain.shape[0]:
        raise DimensionError(f"encoder_block: expected (..., L, {p.ln1_gain.shape[0]}), got {x.shape}")
    h = T.layer_norm(x, p.ln1_gain, p.ln1_bias, p.eps, axes=2)
    h = T.dropout(multi_head(h, p.attention), p.dropout, rng, training)
    a = T.add(x, h)
    h = T.layer_norm(a, p.ln2_gain, p.ln2_bias, p.eps, axes=2)
    h = T.dropout(position_ffn(h, p.ffn), p.dropout, rng, training)
    return T.add(a, h)


# --------------------------------------------------------------- model passes

def _as_tensor(batch) -> Tensor:
    return batch if isinstance(batch, Tensor) else Tensor(batch)


def forward_logits(batch, model: TransformerClassifier, training: bool = False,
                   rng: Optional[SeededRng] = None) -> Tensor:
    """Pre-softmax class scores of shape (B, num_classes)."""
    cfg = model.config
    x = _as_tensor(batch)
    if x.data.ndim != 2 or x.shape[1] != cfg.input_len:
        raise DimensionError(f"expected batches of {cfg.input_len} features per row, got shape {x.shape}")
    h = T.reshape(x, (x.shape[0], cfg.input_len, cfg.channels))
    for block in model.blocks:
        h = encoder_block(h, block, training, rng)
    h = T.mean(h, axis=1 if cfg.pooling == "positions" else 2)
    for layer in model.head.hidden:
        h = T.dropout(T.relu(layer(h)), model.head.dropout, rng, training)
    return model.head.output(h)


def forward(batch, model: TransformerClassifier, training: bool = False,
            rng: Optional[SeededRng] = None) -> Tensor:
    """Class probabilities of shape (B, num_classes); rows sum to 1."""
    return T.softmax_rows(forward_logits(batch, model, training, rng))


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """
    Mean of -log p[label], with p clamped at PROB_CLAMP.

    Raises:
        LabelError: a label is outside 0..num_classes-1
    """
    P = probs.data
    y = np.asarray(labels, dtype=np.int64)
    if P.ndim != 2 or y.shape != (P.shape[0],):
        raise DimensionError(f"cross_entropy: probs {P.shape} vs labels {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= P.shape[1]):
        raise LabelError(f"labels must lie in 0..{P.shape[1] - 1}")
    n = P.shape[0]
    rows = np.arange(n)
    picked = P[rows, y]
    kept = picked >= PROB_CLAMP
    loss = -np.log(np.maximum(picked, PROB_CLAMP)).mean()

    def rule(g):
        grad = np.zeros_like(P)
        grad[rows, y] = np.where(kept, -float(g) / (n * np.maximum(picked, PROB_CLAMP)), 0.0)
        return (grad,)

    return T.emit("cross_entropy", np.array(loss), (probs,), rule)


def argmax_rows(probs: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(probs), axis=1)


def predict_proba(model: TransformerClassifier, X: np.ndarray, batch_size: Optional[int] = None) -> np.ndarray:
    """Eval-mode probabilities for a feature matrix, computed in chunks."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.config.input_len:
        raise DimensionError(f"expected {model.config.input_len} features per row, got shape {X.shape}")
    step = batch_size or model.config.batch_size
    chunks = [forward(X[i:i + step], model).data for i in range(0, len(X), step)]
    if not chunks:
        return np.zeros((0, model.config.num_classes))
    return np.concatenate(chunks, axis=0)


def predict(model: TransformerClassifier, batch, batch_size: Optional[int] = None) -> np.ndarray:
    """Class index per row."""
    X = batch.data if isinstance(batch, Tensor) else batch
    return argmax_rows(predict_proba(model, X, batch_size))


def evaluate_split(model: TransformerClassifier, dataset: LabeledDataset,
                   batch_size: Optional[int] = None) -> Tuple[float, float]:
    """Eval-mode (mean cross-entropy, accuracy) of a dataset."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot evaluate an empty dataset")
    probs = predict_proba(model, dataset.X, batch_size)
    picked = np.maximum(probs[np.arange(len(dataset)), dataset.y], PROB_CLAMP)
    loss = float(-np.log(picked).mean())
    acc = float((argmax_rows(probs) == dataset.y).mean())
    return loss, acc


def train(model: TransformerClassifier, train_set: LabeledDataset, cfg: ModelConfig,
          rng: SeededRng, test_set: Optional[LabeledDataset] = None) -> TrainingHistory:
    """
    Train with shuffled mini-batches and Adam, recording one history row per epoch.

    Train loss/accuracy are running averages over the epoch's batches;
    test loss/accuracy are computed in eval mode after each epoch.

    Raises:
        EmptyDatasetError: the training set has no rows
    """
    if len(train_set) == 0:
        raise EmptyDatasetError("training set is empty")
    history = TrainingHistory()
    if cfg.epochs == 0:
        return history

    params = model.parameters()
    opt = Adam(params, lr=cfg.learning_rate, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS)
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            labels = train_set.y[idx]
            with Tape() as tape:
                probs = forward(train_set.X[idx], model, training=True, rng=rng)
                loss = cross_entropy(probs, labels)
            T.backward(tape, loss, params)
            opt.step()
            loss_sum += loss.item() * len(idx)
            correct += int((argmax_rows(probs.data) == labels).sum())

        test_loss, test_acc = (None, None)
        if test_set is not None and len(test_set):
            test_loss, test_acc = evaluate_split(model, test_set, cfg.batch_size)
        record = EpochRecord(epoch, loss_sum / n, correct / n, test_loss, test_acc)
        history.append(record)
        logger.info("epoch %d/%d %s", epoch, cfg.epochs, record.describe())
    return history
