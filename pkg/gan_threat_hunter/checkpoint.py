"""
Versioned JSON checkpoints for the classifier and its preprocessing state.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import CHECKPOINT_FORMAT, CHECKPOINT_VERSION
from .data_pipeline import FeatureEncoders, LabelCodec, StandardizationStats
from .errors import CheckpointError
from .tensor import SeededRng
from .transformer import ModelConfig, TransformerClassifier, init_model
from .utils import StagedWrites, write_json

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    """Trained model plus everything needed to encode new rows for it."""
    model: TransformerClassifier
    codec: LabelCodec
    seed: int
    stats: Optional[StandardizationStats] = None
    encoders: Optional[FeatureEncoders] = None
    feature_names: List[str] = field(default_factory=list)

    def check_codec(self, codec: LabelCodec) -> None:
        if tuple(codec.names) != tuple(self.codec.names):
            raise CheckpointError(
                f"checkpoint v{CHECKPOINT_VERSION} was trained on classes {list(self.codec.names)}, "
                f"dataset has {list(codec.names)}"
            )

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "config": self.model.config.to_dict(),
            "codec": list(self.codec.names),
            "feature_names": list(self.feature_names),
            "stats": self.stats.to_dict() if self.stats is not None else None,
            "encoders": self.encoders.to_dict() if self.encoders is not None else None,
            "parameters": [
                {"name": name, "shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
                for name, p in self.model.named_parameters()
            ],
        }


def save_checkpoint(path, checkpoint: Checkpoint, stage: Optional[StagedWrites] = None) -> Path:
    """Write the checkpoint now, or into ``stage`` to land with its companion files."""
    if stage is not None:
        stage.write_json(path, checkpoint.to_dict())
    else:
        write_json(path, checkpoint.to_dict())
    logger.info("wrote checkpoint %s (%d parameter tensors)", path, len(checkpoint.model.parameters()))
    return Path(path)


def load_checkpoint(path) -> Checkpoint:
    """
    Rebuild a checkpoint written by save_checkpoint.

    Raises:
        FileNotFoundError: path does not exist
        CheckpointError: unreadable file, foreign format/version, or
            parameters that do not match the stored config
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a JSON checkpoint ({exc})") from None
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unknown checkpoint format {payload.get('format')!r}")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {payload.get('version')} is not supported (expected {CHECKPOINT_VERSION})"
        )

    cfg = ModelConfig.from_dict(payload["config"])
    model = init_model(cfg, SeededRng(payload["seed"]))
    stored = {p["name"]: p for p in payload["parameters"]}
    expected = model.named_parameters()
    if set(stored) != {name for name, _ in expected}:
        missing = sorted({name for name, _ in expected} - set(stored))
        extra = sorted(set(stored) - {name for name, _ in expected})
        raise CheckpointError(f"{path}: parameter mismatch; missing {missing}, unexpected {extra}")
    for name, param in expected:
        entry = stored[name]
        if tuple(entry["shape"]) != param.shape:
            raise CheckpointError(f"{path}: {name} has shape {tuple(entry['shape'])}, config implies {param.shape}")
        param.data = np.asarray(entry["data"], dtype=np.float64).reshape(param.shape)

    return Checkpoint(
        model=model,
        codec=LabelCodec(tuple(payload["codec"])),
        seed=payload["seed"],
        stats=StandardizationStats.from_dict(payload["stats"]) if payload.get("stats") else None,
        encoders=FeatureEncoders.from_dict(payload["encoders"]) if payload.get("encoders") else None,
        feature_names=list(payload.get("feature_names", [])),
    )
