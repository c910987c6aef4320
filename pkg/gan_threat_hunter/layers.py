"""
Parameter initialization and the dense layer shared by the classifier head and the GAN.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .tensor import SeededRng, Tensor


def glorot(rng: SeededRng, fan_in: int, fan_out: int, name: str,
           shape: Optional[Tuple[int, ...]] = None) -> Tensor:
    """Uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))) weights."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, shape or (fan_in, fan_out)), requires_grad=True, name=name)


def zeros(shape: Tuple[int, ...], name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(shape: Tuple[int, ...], name: str) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True, name=name)


@dataclass
class Dense:
    """Affine map x @ W + b over the trailing axis."""
    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, rng: SeededRng, fan_in: int, fan_out: int, name: str) -> "Dense":
        return cls(glorot(rng, fan_in, fan_out, f"{name}.W"), zeros((fan_out,), f"{name}.b"))

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return T.add_bias(T.matmul(x, self.weight), self.bias)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]


def stack_dense(rng: SeededRng, widths: Sequence[int], name: str) -> List[Dense]:
    """Dense layers connecting consecutive entries of ``widths``."""
    return [
        Dense.init(rng, widths[i], widths[i + 1], f"{name}.{i}")
        for i in range(len(widths) - 1)
    ]
