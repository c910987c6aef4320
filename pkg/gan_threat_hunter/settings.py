"""
Run configuration: defaults < THREAT_HUNTER_* environment < dotenv config file < CLI flags.
"""
import logging
import os
from dataclasses import dataclass, fields
from typing import Callable, Dict, Mapping, Optional, Tuple, get_type_hints

from dotenv import dotenv_values

from . import config as C
from .data_pipeline import SplitSpec
from .errors import ConfigError
from .gan import GanConfig
from .metrics import EMIT_FORMATS
from .transformer import ModelConfig

logger = logging.getLogger(__name__)

TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


def parse_bool(text: str) -> bool:
    word = text.strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValueError(f"expected one of {TRUE_WORDS + FALSE_WORDS}")


def parse_str_list(text: str) -> Tuple[str, ...]:
    return tuple(item.strip() for item in text.split(",") if item.strip())


def parse_int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(item) for item in parse_str_list(text))


PARSERS: Dict[object, Callable[[str], object]] = {
    str: str,
    int: int,
    float: float,
    bool: parse_bool,
    Tuple[str, ...]: parse_str_list,
    Tuple[int, ...]: parse_int_list,
}


@dataclass
class RunConfig:
    """Every knob of a run; one field per config key (key = field name upper-cased)."""
    # paths
    raw_csv: str = C.RAW_CSV
    bundle_dir: str = C.BUNDLE_DIR
    augmented_dir: str = C.AUGMENTED_DIR
    checkpoint: str = C.CHECKPOINT
    report_dir: str = C.REPORT_DIR
    history_csv: str = C.HISTORY_CSV
    baseline_checkpoint: str = C.BASELINE_CHECKPOINT
    # preprocessing
    label_column: str = C.LABEL_COLUMN
    drop_columns: Tuple[str, ...] = C.DROP_COLUMNS
    onehot_columns: Tuple[str, ...] = C.ONEHOT_COLUMNS
    test_fraction: float = C.TEST_FRACTION
    stratified: bool = C.STRATIFIED
    subsample_fraction: float = C.SUBSAMPLE_FRACTION
    seed: int = C.SEED
    # classifier
    head_size: int = C.HEAD_SIZE
    num_heads: int = C.NUM_HEADS
    filters: int = C.FILTERS
    num_blocks: int = C.NUM_BLOCKS
    dropout: float = C.DROPOUT
    mlp_units: Tuple[int, ...] = C.MLP_UNITS
    mlp_dropout: float = C.MLP_DROPOUT
    learning_rate: float = C.LEARNING_RATE
    batch_size: int = C.BATCH_SIZE
    epochs: int = C.EPOCHS
    pooling: str = C.POOLING
    # augmentation
    gan_latent_dim: int = C.GAN_LATENT_DIM
    gan_gen_hidden: Tuple[int, ...] = C.GAN_GEN_HIDDEN
    gan_disc_hidden: Tuple[int, ...] = C.GAN_DISC_HIDDEN
    gan_learning_rate: float = C.GAN_LEARNING_RATE
    gan_beta1: float = C.GAN_BETA1
    gan_steps: int = C.GAN_STEPS
    gan_batch_size: int = C.GAN_BATCH_SIZE
    gan_min_rows: int = C.GAN_MIN_ROWS
    gan_workers: int = C.GAN_WORKERS
    gan_ema_decay: float = C.GAN_EMA_DECAY
    augment_targets: str = C.AUGMENT_TARGETS
    use_augmented: bool = False
    # output
    report_formats: Tuple[str, ...] = EMIT_FORMATS
    log_level: str = "INFO"

    def __post_init__(self):
        unknown = [f for f in self.report_formats if f not in EMIT_FORMATS]
        if unknown:
            raise ConfigError(f"unknown report formats {unknown}; choose from {EMIT_FORMATS}")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise ConfigError(f"unknown log level {self.log_level!r}")

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.test_fraction, self.stratified, self.seed)

    def model_config(self, input_len: int = C.FEATURE_DIM, num_classes: int = C.NUM_CLASSES) -> ModelConfig:
        return ModelConfig(
            head_size=self.head_size, num_heads=self.num_heads, filters=self.filters,
            num_blocks=self.num_blocks, dropout=self.dropout, input_len=input_len,
            num_classes=num_classes, mlp_units=self.mlp_units, mlp_dropout=self.mlp_dropout,
            learning_rate=self.learning_rate, batch_size=self.batch_size, epochs=self.epochs,
            pooling=self.pooling,
        )

    def gan_config(self, feature_dim: int = C.FEATURE_DIM) -> GanConfig:
        return GanConfig(
            latent_dim=self.gan_latent_dim, gen_hidden=self.gan_gen_hidden,
            disc_hidden=self.gan_disc_hidden, learning_rate=self.gan_learning_rate,
            steps=self.gan_steps, batch_size=self.gan_batch_size, seed=self.seed,
            beta1=self.gan_beta1, feature_dim=feature_dim, min_rows=self.gan_min_rows,
            workers=self.gan_workers, ema_decay=self.gan_ema_decay,
        )


def setting_keys() -> Tuple[str, ...]:
    return tuple(f.name.upper() for f in fields(RunConfig))


def parse_value(key: str, text: str) -> object:
    """
    Convert one KEY=VALUE string to the field's type.

    Raises:
        ConfigError: unknown key or unparseable value
    """
    name = key.strip().lower()
    hints = get_type_hints(RunConfig)
    if name not in hints:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return PARSERS[hints[name]](text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key.upper()}: {text!r} ({exc})") from None


def read_config_file(path) -> Dict[str, str]:
    """KEY=VALUE pairs from a dotenv-style file; unknown keys are rejected."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such config file: {path}")
    values = {k.upper(): v for k, v in dotenv_values(path).items() if v is not None}
    unknown = sorted(set(values) - set(setting_keys()))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return values


def environment_values(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    found = {}
    for key in setting_keys():
        value = environ.get(C.ENV_PREFIX + key)
        if value is not None:
            found[key] = value
    return found


def load_run_config(config_path=None, overrides: Optional[Mapping[str, str]] = None,
                    environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Assemble a RunConfig.

    Args:
        config_path: Optional dotenv file
        overrides: KEY -> raw string from CLI flags (highest precedence)
        environ: Environment mapping; defaults to os.environ

    Returns:
        RunConfig with every layer applied
    """
    layered: Dict[str, str] = {}
    layered.update(environment_values(environ))
    if config_path:
        layered.update(read_config_file(config_path))
    layered.update({k.upper(): v for k, v in (overrides or {}).items()})
    values = {key.lower(): parse_value(key, text) for key, text in layered.items()}
    cfg = RunConfig(**values)
    if layered:
        logger.debug("config keys set: %s", ", ".join(sorted(layered)))
    return cfg
