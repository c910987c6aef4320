"""
Class-conditional GAN augmentation of minority classes.

One generator/discriminator pair is trained per class on that class's
standardized rows; its samples are appended to the training set as flagged
synthetic rows.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import tensor as T
from .config import (
    FEATURE_DIM, GAN_BATCH_SIZE, GAN_BETA1, GAN_DISC_HIDDEN, GAN_GEN_HIDDEN,
    GAN_EMA_DECAY, GAN_LATENT_DIM, GAN_LEAKY_SLOPE, GAN_LEARNING_RATE, GAN_LOG_EVERY,
    GAN_MIN_ROWS, GAN_PROB_CLIP, GAN_STEPS, GAN_WORKERS, PROVENANCE_FORMAT, PROVENANCE_VERSION,
    SEED,
)
from .data_pipeline import LabeledDataset
from .errors import ConfigError, DimensionError, EmptyDatasetError, LabelError, NonFiniteError
from .layers import Dense, stack_dense
from .optim import Adam
from .tensor import SeededRng, Tape, Tensor

logger = logging.getLogger(__name__)

LOSS_CLAMP = 1e-12


@dataclass
class GanConfig:
    """Sizes and optimizer settings of one class's generator/discriminator pair."""
    latent_dim: int = GAN_LATENT_DIM
    gen_hidden: Tuple[int, ...] = GAN_GEN_HIDDEN
    disc_hidden: Tuple[int, ...] = GAN_DISC_HIDDEN
    learning_rate: float = GAN_LEARNING_RATE
    steps: int = GAN_STEPS
    batch_size: int = GAN_BATCH_SIZE
    seed: int = SEED
    beta1: float = GAN_BETA1
    leaky_slope: float = GAN_LEAKY_SLOPE
    feature_dim: int = FEATURE_DIM
    min_rows: int = GAN_MIN_ROWS
    workers: int = GAN_WORKERS
    log_every: int = GAN_LOG_EVERY
    ema_decay: float = GAN_EMA_DECAY

    def __post_init__(self):
        self.gen_hidden = tuple(int(u) for u in self.gen_hidden)
        self.disc_hidden = tuple(int(u) for u in self.disc_hidden)
        for name in ("latent_dim", "batch_size", "feature_dim", "min_rows", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.learning_rate <= 0 or not 0.0 <= self.beta1 < 1.0:
            raise ConfigError("learning_rate must be positive and beta1 in [0, 1)")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError(f"ema_decay must be in [0, 1), got {self.ema_decay}")
        if any(u < 1 for u in self.gen_hidden + self.disc_hidden):
            raise ConfigError("hidden widths must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gen_hidden"] = list(self.gen_hidden)
        d["disc_hidden"] = list(self.disc_hidden)
        return d


@dataclass
class GanPair:
    """Generator (latent -> features) and discriminator (features -> (0, 1))."""
    generator: List[Dense]
    discriminator: List[Dense]
    label: Optional[int] = None
    seed: int = 0
    steps_trained: int = 0
    leaky_slope: float = GAN_LEAKY_SLOPE

    @property
    def latent_dim(self) -> int:
        return self.generator[0].fan_in

    @property
    def feature_dim(self) -> int:
        return self.generator[-1].fan_out

    def generator_parameters(self) -> List[Tensor]:
        return [p for layer in self.generator for p in layer.parameters()]

    def discriminator_parameters(self) -> List[Tensor]:
        return [p for layer in self.discriminator for p in layer.parameters()]

    def parameters(self) -> List[Tensor]:
        return self.generator_parameters() + self.discriminator_parameters()

    def copy(self) -> "GanPair":
        def clone(layers: List[Dense]) -> List[Dense]:
            return [
                Dense(Tensor(d.weight.data, requires_grad=True, name=d.weight.name),
                      Tensor(d.bias.data, requires_grad=True, name=d.bias.name))
                for d in layers
            ]

        return GanPair(clone(self.generator), clone(self.discriminator), self.label,
                       self.seed, self.steps_trained, self.leaky_slope)


@dataclass
class SyntheticBatch:
    features: np.ndarray
    label: int
    seed: int
    steps: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.label < 0:
            raise LabelError(f"synthetic batch label must be a class index, got {self.label}")
        if not np.isfinite(self.features).all():
            raise NonFiniteError("generator produced non-finite features")

    def __len__(self) -> int:
        return len(self.features)


@dataclass
class GanHistory:
    """Per-step discriminator and generator losses."""
    d_loss: List[float] = field(default_factory=list)
    g_loss: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.d_loss)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "step": np.arange(1, len(self) + 1),
            "d_loss": self.d_loss,
            "g_loss": self.g_loss,
        })


def init_gan(cfg: GanConfig, rng: SeededRng, label: Optional[int] = None) -> GanPair:
    gen = stack_dense(rng, [cfg.latent_dim, *cfg.gen_hidden, cfg.feature_dim], "gen")
    disc = stack_dense(rng, [cfg.feature_dim, *cfg.disc_hidden, 1], "disc")
    return GanPair(gen, disc, label=label, seed=rng.seed, leaky_slope=cfg.leaky_slope)


def sample_noise(cfg: GanConfig, rng: SeededRng, n: int) -> Tensor:
    if n < 1:
        raise ConfigError(f"noise batch size must be >= 1, got {n}")
    return Tensor(rng.normal((n, cfg.latent_dim)))


def generate(pair: GanPair, z: Tensor) -> Tensor:
    """ReLU hidden layers, linear output on the standardized scale."""
    h = z
    for layer in pair.generator[:-1]:
        h = T.relu(layer(h))
    return pair.generator[-1](h)


def discriminator_logits(pair: GanPair, x: Tensor) -> Tensor:
    """Leaky-ReLU hidden layers, linear output of shape (n, 1)."""
    if x.data.ndim != 2 or x.shape[1] != pair.feature_dim:
        raise DimensionError(f"discriminator expects (n, {pair.feature_dim}) rows, got {x.shape}")
    h = x
    for layer in pair.discriminator[:-1]:
        h = T.leaky_relu(layer(h), pair.leaky_slope)
    return pair.discriminator[-1](h)


def discriminate(pair: GanPair, x: Tensor) -> Tensor:
    """Sigmoid of the logits, kept strictly inside (0, 1)."""
    return T.clip(T.sigmoid(discriminator_logits(pair, x)), GAN_PROB_CLIP, 1.0 - GAN_PROB_CLIP)


def _log_prob(p: Tensor) -> Tensor:
    return T.log_clamped(p, LOSS_CLAMP, 1.0 - LOSS_CLAMP)


def disc_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """-(mean log D(x) + mean log(1 - D(G(z)))), probabilities clamped to [1e-12, 1-1e-12]."""
    real_term = T.mean(_log_prob(d_real))
    fake_term = T.mean(_log_prob(T.add_scalar(T.scale(d_fake, -1.0), 1.0)))
    return T.scale(T.add(real_term, fake_term), -1.0)


def gen_loss(d_fake: Tensor) -> Tensor:
    """-mean log D(G(z)), clamped like disc_loss."""
    return T.scale(T.mean(_log_prob(d_fake)), -1.0)


def disc_loss_from_logits(l_real: Tensor, l_fake: Tensor) -> Tensor:
    """disc_loss written on logits: mean softplus(-l_real) + mean softplus(l_fake)."""
    return T.add(T.mean(T.softplus(T.scale(l_real, -1.0))), T.mean(T.softplus(l_fake)))


def gen_loss_from_logits(l_fake: Tensor) -> Tensor:
    """gen_loss written on logits; the gradient never vanishes when D is confident."""
    return T.mean(T.softplus(T.scale(l_fake, -1.0)))


def discriminator_accuracy(pair: GanPair, real: np.ndarray, fake: np.ndarray) -> float:
    """Share of real rows scored >= 0.5 plus fake rows scored < 0.5."""
    l_real = discriminator_logits(pair, Tensor(real)).data
    l_fake = discriminator_logits(pair, Tensor(fake)).data
    correct = int((l_real >= 0.0).sum()) + int((l_fake < 0.0).sum())
    return correct / (len(l_real) + len(l_fake))


def train_gan(pair: GanPair, real: np.ndarray, cfg: GanConfig,
              rng: Optional[SeededRng] = None) -> Tuple[GanPair, GanHistory]:
    """
    Alternate one discriminator and one generator Adam step per iteration.

    The input pair is left untouched; training happens on a copy. Each
    step's backward pass writes gradients only to the network being updated.
    Both losses are taken on discriminator logits. The returned generator
    holds the exponential moving average (``cfg.ema_decay``) of its weights
    over the run; ``ema_decay=0`` keeps the last iterate.

    Args:
        pair: Freshly initialized (or previously trained) pair
        real: Standardized rows of one class, shape (n, feature_dim)
        cfg: Steps, batch size and optimizer settings
        rng: Batch and noise randomness; defaults to a stream seeded by the pair

    Returns:
        (trained pair, per-step loss history)

    Raises:
        EmptyDatasetError: no real rows
    """
    real = np.asarray(real, dtype=np.float64)
    if real.ndim != 2 or len(real) == 0:
        raise EmptyDatasetError("GAN training needs at least one real row")
    if real.shape[1] != pair.feature_dim:
        raise DimensionError(f"real rows have {real.shape[1]} features, generator emits {pair.feature_dim}")
    rng = rng or SeededRng(pair.seed)
    trained = pair.copy()
    history = GanHistory()
    d_params = trained.discriminator_parameters()
    g_params = trained.generator_parameters()
    d_opt = Adam(d_params, lr=cfg.learning_rate, beta1=cfg.beta1)
    g_opt = Adam(g_params, lr=cfg.learning_rate, beta1=cfg.beta1)

    # running average of generator weights; sampling uses it after training
    averaged = [p.data.copy() for p in g_params]

    for step in range(1, cfg.steps + 1):
        batch = Tensor(real[rng.integers(0, len(real), cfg.batch_size)])
        fake = generate(trained, sample_noise(cfg, rng, cfg.batch_size)).detach()
        with Tape() as tape:
            loss_d = disc_loss_from_logits(discriminator_logits(trained, batch),
                                           discriminator_logits(trained, fake))
        T.backward(tape, loss_d, d_params)
        d_opt.step()

        with Tape() as tape:
            z = sample_noise(cfg, rng, cfg.batch_size)
            loss_g = gen_loss_from_logits(discriminator_logits(trained, generate(trained, z)))
        T.backward(tape, loss_g, g_params)
        g_opt.step()
        for avg, p in zip(averaged, g_params):
            avg *= cfg.ema_decay
            avg += (1.0 - cfg.ema_decay) * p.data

        history.d_loss.append(loss_d.item())
        history.g_loss.append(loss_g.item())
        if cfg.log_every and step % cfg.log_every == 0:
            logger.debug("gan[%s] step %d: d_loss=%.4f g_loss=%.4f",
                         trained.label, step, history.d_loss[-1], history.g_loss[-1])
    if cfg.steps:
        for avg, p in zip(averaged, g_params):
            p.data = avg
    trained.steps_trained += cfg.steps
    return trained, history


def synthesize(pair: GanPair, n: int, cfg: GanConfig, rng: SeededRng) -> SyntheticBatch:
    """Draw ``n`` generator samples tagged with the pair's class."""
    if n < 1:
        raise ConfigError(f"synthesize needs n >= 1, got {n}")
    if pair.label is None:
        raise LabelError("cannot synthesize from a pair without a class label")
    features = generate(pair, sample_noise(cfg, rng, n)).data
    return SyntheticBatch(features, pair.label, pair.seed, pair.steps_trained)


# ------------------------------------------------------------------ augmentation

@dataclass
class ProvenanceRecord:
    class_name: str
    class_index: int
    seed: int
    steps: int
    rows_added: int
    first_row: int
    final_d_loss: Optional[float] = None
    final_g_loss: Optional[float] = None


@dataclass
class AugmentationResult:
    dataset: LabeledDataset
    provenance: List[ProvenanceRecord] = field(default_factory=list)
    refused: List[str] = field(default_factory=list)
    histories: Dict[str, GanHistory] = field(default_factory=dict)

    @property
    def rows_added(self) -> int:
        return sum(r.rows_added for r in self.provenance)

    def to_dict(self) -> dict:
        return {
            "format": PROVENANCE_FORMAT,
            "version": PROVENANCE_VERSION,
            "records": [asdict(r) for r in self.provenance],
            "refused": list(self.refused),
            "class_counts": self.dataset.class_counts().tolist(),
        }

    def history_frame(self) -> pd.DataFrame:
        """Per-step GAN losses of every augmented class, in class-index order."""
        frames = [h.to_frame().assign(class_name=name) for name, h in self.histories.items()]
        if not frames:
            return pd.DataFrame(columns=["class_name", "step", "d_loss", "g_loss"])
        return pd.concat(frames, ignore_index=True)[["class_name", "step", "d_loss", "g_loss"]]


def resolve_targets(targets: Union[str, Mapping[str, str], None], dataset: LabeledDataset) -> np.ndarray:
    """
    Turn ``Class=N`` / ``Class=Nx`` items into one target count per class.

    Classes without an item keep their current count.

    Raises:
        LabelError: unknown class name
        ConfigError: malformed item or a target below the current count
    """
    counts = dataset.class_counts()
    resolved = counts.copy()
    if targets is None:
        return resolved
    if isinstance(targets, str):
        items: Dict[str, str] = {}
        for item in filter(None, (s.strip() for s in targets.split(","))):
            name, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"augmentation target {item!r} must look like Class=N or Class=Nx")
            items[name.strip()] = value.strip()
    else:
        items = {k: str(v) for k, v in targets.items()}

    for name, value in items.items():
        idx = dataset.codec.encode(name)
        try:
            if value.lower().endswith("x"):
                target = int(round(float(value[:-1]) * counts[idx]))
            else:
                target = int(value)
        except ValueError:
            raise ConfigError(f"augmentation target {name}={value!r} is not a count or multiplier") from None
        if target < counts[idx]:
            raise ConfigError(f"target {target} for {name} is below its current count {counts[idx]}")
        resolved[idx] = target
    return resolved


def _augment_class(train: LabeledDataset, class_idx: int, deficit: int,
                   cfg: GanConfig) -> Tuple[int, SyntheticBatch, GanHistory]:
    rng = SeededRng(cfg.seed + class_idx)
    pair = init_gan(cfg, rng, label=class_idx)
    trained, history = train_gan(pair, train.class_rows(class_idx), cfg, rng)
    return class_idx, synthesize(trained, deficit, cfg, rng), history


def augment_dataset(train: LabeledDataset, target_counts: Sequence[int], cfg: GanConfig) -> AugmentationResult:
    """
    Raise every class below its target with rows from a per-class GAN.

    Real rows are never modified or reordered; synthetic rows are appended
    in class-index order and flagged. Classes with fewer than
    ``cfg.min_rows`` real rows are refused with a warning.

    Raises:
        ConfigError: a target is below the class's current count
    """
    counts = train.class_counts()
    targets = np.asarray(target_counts, dtype=np.int64)
    if targets.shape != counts.shape:
        raise DimensionError(f"expected {len(counts)} target counts, got {targets.shape}")
    if (targets < counts).any():
        low = [train.codec.names[i] for i in np.flatnonzero(targets < counts)]
        raise ConfigError(f"targets below current counts for {low}")

    refused: List[str] = []
    jobs: List[Tuple[int, int]] = []
    for idx in np.flatnonzero(targets > counts):
        name = train.codec.names[idx]
        real_rows = len(train.class_rows(int(idx)))
        if real_rows < cfg.min_rows:
            logger.warning("refusing to augment %s: %d real rows (< %d)", name, real_rows, cfg.min_rows)
            refused.append(name)
            continue
        jobs.append((int(idx), int(targets[idx] - counts[idx])))

    if cfg.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(lambda job: _augment_class(train, job[0], job[1], cfg), jobs))
    else:
        outcomes = [_augment_class(train, idx, deficit, cfg) for idx, deficit in jobs]

    dataset = train
    provenance = []
    histories: Dict[str, GanHistory] = {}
    for idx, batch, history in sorted(outcomes, key=lambda o: o[0]):
        first = len(dataset)
        dataset = dataset.append(batch.features, idx, synthetic=True)
        record = ProvenanceRecord(
            class_name=train.codec.names[idx], class_index=idx, seed=batch.seed,
            steps=batch.steps, rows_added=len(batch), first_row=first,
            final_d_loss=history.d_loss[-1] if len(history) else None,
            final_g_loss=history.g_loss[-1] if len(history) else None,
        )
        provenance.append(record)
        histories[record.class_name] = history
        logger.info("augmented %s: +%d synthetic rows (seed %d, %d steps)",
                    record.class_name, record.rows_added, record.seed, record.steps)
    return AugmentationResult(dataset, provenance, refused, histories)

