"""
Dense float64 tensors, seeded randomness and a reverse-mode gradient tape.

Ops are plain functions. When a Tape is active (``with Tape() as tape:``) and
an op touches a tracked tensor, the op is recorded together with its backward
rule; ``backward(tape, loss)`` replays the record in reverse order.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, NonFiniteError, TapeError

Array = np.ndarray
BackwardRule = Callable[[Array], Tuple[Optional[Array], ...]]


def _check_finite(arr: Array, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op}: non-finite value at op boundary")


class Tensor:
    """Shape-tagged float64 array with an attached gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        """
        Initialize a tensor from array-like data (always copied).

        Args:
            data: Nested lists, scalar or ndarray
            requires_grad: Whether backward() should produce a gradient for it
            name: Label used in error messages and checkpoints
        """
        arr = np.array(data, dtype=np.float64)
        self._adopt(arr, name or "tensor")
        self.grad: Optional[Array] = None
        self.requires_grad = requires_grad
        self.name = name

    def _adopt(self, arr: Array, label: str) -> None:
        if any(extent <= 0 for extent in arr.shape):
            raise DimensionError(f"{label}: extents must be positive, got {arr.shape}")
        _check_finite(arr, label)
        self.data = arr

    @classmethod
    def _wrap(cls, arr: Array, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out._adopt(np.asarray(arr, dtype=np.float64), op)
        out.grad = None
        out.requires_grad = False
        out.name = ""
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> Array:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f", name='{self.name}'" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


class SeededRng:
    """Seeded PCG64 stream; identical seeds give identical draws everywhere."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def state(self) -> dict:
        return self._gen.bit_generator.state

    def normal(self, shape) -> Array:
        return self._gen.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> Array:
        return self._gen.uniform(low, high, shape)

    def random(self, shape) -> Array:
        return self._gen.random(shape)

    def integers(self, low: int, high: int, size) -> Array:
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> Array:
        return self._gen.permutation(n)

    def spawn(self, key: int) -> "SeededRng":
        """Derive an independent child stream from (seed, key)."""
        child = np.random.SeedSequence([self.seed, int(key)]).generate_state(1, dtype=np.uint64)[0]
        return SeededRng(int(child))


@dataclass
class TapeEntry:
    op: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    rule: BackwardRule


_local = threading.local()


def _tape_stack() -> List["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed ops; replayable exactly once."""

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self._outputs: set = set()
        self._spent = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        stack = _tape_stack()
        # innermost first; tapes nest but never interleave
        for i in range(len(stack) - 1, -1, -1):
            if stack[i] is self:
                del stack[i]
                break
        return False

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, output: Tensor, inputs: Sequence[Tensor], rule: BackwardRule, op: str) -> None:
        self.entries.append(TapeEntry(op, output, tuple(inputs), rule))
        self._outputs.add(id(output))

    def holds(self, t: Tensor) -> bool:
        return id(t) in self._outputs

    @property
    def spent(self) -> bool:
        return self._spent

    def backward(self, loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> None:
        """
        Accumulate d(loss)/d(leaf) into every tracked leaf tensor's grad.

        Args:
            loss: Scalar tensor produced on this tape
            params: When given, only these leaves receive gradients
        """
        if self._spent:
            raise TapeError("tape was already replayed; record a fresh tape")
        if loss.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.shape}")
        if not self.holds(loss):
            raise TapeError("loss tensor was not produced on this tape")
        allowed = None if params is None else {id(p) for p in params}

        grads = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            g = grads.pop(id(entry.output), None)
            if g is None:
                continue
            for inp, gi in zip(entry.inputs, entry.rule(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in self._outputs:
                    grads[key] = grads[key] + gi if key in grads else gi
                elif allowed is None or key in allowed:
                    inp.grad = np.array(gi, dtype=np.float64) if inp.grad is None else inp.grad + gi
        self._spent = True


def backward(tape: Tape, loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> None:
    """Replay ``tape`` from ``loss``; see Tape.backward."""
    tape.backward(loss, params)


def emit(op: str, out: Array, inputs: Sequence[Tensor], rule: BackwardRule) -> Tensor:
    """Wrap an op result, recording it on the active tape when an input is tracked."""
    result = Tensor._wrap(out, op)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        tape.record(result, inputs, rule, op)
    return result


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ----------------------------------------------------------------- elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    A, B = a.data, b.data
    return emit("mul", A * B, (a, b), lambda g: (g * B, g * A))


def scale(x: Tensor, c: float) -> Tensor:
    return emit("scale", x.data * c, (x,), lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    return emit("add_scalar", x.data + c, (x,), lambda g: (g,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a vector along the trailing axis of ``x``."""
    if b.data.ndim != 1 or b.shape[0] != x.shape[-1]:
        raise DimensionError(f"add_bias: bias {b.shape} does not fit trailing axis of {x.shape}")
    width = b.shape[0]
    return emit("add_bias", x.data + b.data, (x, b),
                 lambda g: (g, g.reshape(-1, width).sum(axis=0)))


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at exactly 0 is 0."""
    X = x.data
    mask = X > 0
    return emit("relu", np.where(mask, X, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    X = x.data
    mask = X > 0
    return emit("leaky_relu", np.where(mask, X, slope * X), (x,),
                 lambda g: (np.where(mask, g, slope * g),))


def sigmoid(x: Tensor) -> Tensor:
    Y = np.exp(-np.logaddexp(0.0, -x.data))
    return emit("sigmoid", Y, (x,), lambda g: (g * Y * (1.0 - Y),))


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x) without overflow; its derivative is sigmoid(x)."""
    X = x.data
    S = np.exp(-np.logaddexp(0.0, -X))
    return emit("softplus", np.logaddexp(0.0, X), (x,), lambda g: (g * S,))


def clip(x: Tensor, low: float, high: float) -> Tensor:
    """Clamp to [low, high]; zero gradient outside the interval."""
    X = x.data
    inside = (X >= low) & (X <= high)
    return emit("clip", np.clip(X, low, high), (x,), lambda g: (np.where(inside, g, 0.0),))


def log_clamped(x: Tensor, low: float = 1e-12, high: Optional[float] = None) -> Tensor:
    """Natural log of x clipped to [low, high]; zero gradient where clipped."""
    X = x.data
    clipped = np.clip(X, low, high if high is not None else np.inf)
    inside = (X >= low) if high is None else (X >= low) & (X <= high)
    return emit("log_clamped", np.log(clipped), (x,),
                 lambda g: (np.where(inside, g / clipped, 0.0),))


# ------------------------------------------------------------------ structural

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product with an optional leading batch axis.

    ``(..., m, k) @ (k, n)`` shares the right operand across the batch;
    ``(..., m, k) @ (..., k, n)`` multiplies matching batch slices.

    Raises:
        DimensionError: naming both shapes when the operands do not fit
    """
    A, B = a.data, b.data
    fits = (
        A.ndim >= 2 and B.ndim >= 2 and A.shape[-1] == B.shape[-2]
        and (B.ndim == 2 or B.shape[:-2] == A.shape[:-2])
    )
    if not fits:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def rule(g: Array):
        ga = g @ np.swapaxes(B, -1, -2)
        if B.ndim == 2 and A.ndim > 2:
            gb = A.reshape(-1, A.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(A, -1, -2) @ g
        return ga, gb

    return emit("matmul", A @ B, (a, b), rule)


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.data.ndim < 2:
        raise DimensionError(f"transpose: need at least 2 axes, got {x.shape}")
    return emit("transpose", np.swapaxes(x.data, -1, -2), (x,),
                 lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {src} as {tuple(shape)}") from exc
    return emit("reshape", out, (x,), lambda g: (g.reshape(src),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    arrays = [t.data for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    cuts = np.cumsum([a.shape[axis] for a in arrays])[:-1]
    return emit("concat", out, tuple(tensors), lambda g: tuple(np.split(g, cuts, axis=axis)))


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return emit("sum", np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    """Mean over every entry (scalar result) or over one axis."""
    X = x.data
    if axis is None:
        n = X.size
        return emit("mean", np.array(X.mean()), (x,), lambda g: (np.full(X.shape, float(g) / n),))
    n = X.shape[axis]
    return emit("mean", X.mean(axis=axis), (x,),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), X.shape) / n,))


# ---------------------------------------------------------------- model pieces

def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the trailing axis, computed with max subtraction."""
    X = x.data
    e = np.exp(X - X.max(axis=-1, keepdims=True))
    Y = e / e.sum(axis=-1, keepdims=True)
    return emit("softmax_rows", Y, (x,),
                 lambda g: (Y * (g - (g * Y).sum(axis=-1, keepdims=True)),))


def dropout(x: Tensor, p: float, rng: Optional[SeededRng], training: bool) -> Tensor:
    """Inverted dropout: scale kept units by 1/(1-p) in training, identity otherwise."""
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return emit("dropout", x.data * mask, (x,), lambda g: (g * mask,))


@dataclass
class LayerNormState:
    """Statistics of one normalization call (over the trailing ``axes`` axes)."""
    mean: Array
    std: Array
    eps: float


def layer_norm_state(X: Array, eps: float, axes: int = 1) -> LayerNormState:
    reduce = tuple(range(X.ndim - axes, X.ndim))
    mu = X.mean(axis=reduce, keepdims=True)
    var = ((X - mu) ** 2).mean(axis=reduce, keepdims=True)
    return LayerNormState(mean=mu, std=np.sqrt(var + eps), eps=eps)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6, axes: int = 1) -> Tensor:
    """
    Normalize over the trailing ``axes`` axes, then apply per-channel gain/bias.

    Args:
        x: Input of shape (..., C)
        gain: Per-channel scale of shape (C,)
        bias: Per-channel shift of shape (C,)
        eps: Added to the variance before the square root (> 0)
        axes: Number of trailing axes the statistics are taken over

    Returns:
        Tensor of the same shape as x
    """
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError(f"layer_norm: gain {gain.shape}/bias {bias.shape} do not fit {x.shape}")
    if not 1 <= axes <= x.data.ndim:
        raise DimensionError(f"layer_norm: cannot reduce {axes} axes of {x.shape}")

    X, G = x.data, gain.data
    state = layer_norm_state(X, eps, axes)
    reduce = tuple(range(X.ndim - axes, X.ndim))
    inv = 1.0 / state.std
    xhat = (X - state.mean) * inv

    def rule(g: Array):
        gxhat = g * G
        gx = inv * (
            gxhat
            - gxhat.mean(axis=reduce, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=reduce, keepdims=True)
        )
        return gx, (g * xhat).reshape(-1, width).sum(axis=0), g.reshape(-1, width).sum(axis=0)

    return emit("layer_norm", xhat * G + bias.data, (x, gain, bias), rule)
