"""
GAN Threat Hunter - GAN-augmented Transformer classification of IoT network flows.
"""

__version__ = "0.1.0"

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data_pipeline import (
    DatasetBundle, LabelCodec, LabeledDataset, SplitSpec, load_bundle, load_csv,
    prepare_dataset, save_bundle, stratified_split,
)
from .errors import InputError, ThreatHunterError
from .gan import GanConfig, augment_dataset, init_gan, synthesize, train_gan
from .metrics import EvaluationReport, TrainingHistory, build_report, confusion, emit
from .tensor import SeededRng, Tape, Tensor, backward
from .transformer import ModelConfig, forward, init_model, predict, train

__all__ = [
    'Checkpoint',
    'load_checkpoint',
    'save_checkpoint',
    'DatasetBundle',
    'LabelCodec',
    'LabeledDataset',
    'SplitSpec',
    'load_bundle',
    'load_csv',
    'prepare_dataset',
    'save_bundle',
    'stratified_split',
    'InputError',
    'ThreatHunterError',
    'GanConfig',
    'augment_dataset',
    'init_gan',
    'synthesize',
    'train_gan',
    'EvaluationReport',
    'TrainingHistory',
    'build_report',
    'confusion',
    'emit',
    'SeededRng',
    'Tape',
    'Tensor',
    'backward',
    'ModelConfig',
    'forward',
    'init_model',
    'predict',
    'train',
]
