"""
Adam optimizer over Tensor parameters.
"""
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import DimensionError, MissingGradientError, NonFiniteError
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment buffers aligned with a parameter list."""
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params: Sequence[Tensor], state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """
    Apply one bias-corrected Adam update in place and clear the gradients.

    Args:
        params: Parameters whose ``grad`` was filled by backward()
        state: Moment buffers, one pair per parameter
        lr: Step size
        beta1: Decay of the first moment
        beta2: Decay of the second moment
        eps: Denominator stabilizer

    Raises:
        MissingGradientError: a parameter has no gradient
        DimensionError: state buffers do not match the parameters
    """
    if len(state.m) != len(params) or len(state.v) != len(params):
        raise DimensionError(f"adam state holds {len(state.m)} buffers for {len(params)} parameters")
    for i, p in enumerate(params):
        if p.grad is None:
            raise MissingGradientError(f"parameter {p.name or i} has no gradient")
        if state.m[i].shape != p.shape:
            raise DimensionError(f"adam buffer {state.m[i].shape} does not match parameter {p.name or i} {p.shape}")

    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        if not np.isfinite(p.data).all():
            raise NonFiniteError(f"adam produced non-finite values in {p.name or 'parameter'}")
        p.grad = None


class Adam:
    """Adam hyperparameters bound to one parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState.for_params(self.params)

    def step(self) -> None:
        adam_step(self.params, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
