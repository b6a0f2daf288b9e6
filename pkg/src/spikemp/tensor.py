"""Minimal dense-tensor engine with reverse-mode differentiation.

Tensors wrap C-contiguous float64 numpy arrays (row-major flat storage plus
shape metadata). Gradients are computed by replaying a ``GradTape`` of
recorded primitive operations in reverse. The engine supports exactly what a
small spiking MLP needs: matmul, elementwise arithmetic, axis reductions with
argmax routing, a thresholded step function with caller-supplied surrogate
backward, and a finite-difference gradient checker.

Tensors are immutable once produced except for grad accumulation. A tape and
the tensors recorded on it belong to one worker at a time; run independent
batches on independent tapes.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence, Union

import numpy as np

Scalar = Union[int, float]


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class TapeError(RuntimeError):
    """Raised when backward is invoked on an invalid tape/loss pair."""


class Tensor:
    """Dense multi-dimensional float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data) -> None:
        # asarray with order="C" keeps 0-d scalars 0-d (ascontiguousarray
        # would promote them to 1-d) while still forcing row-major layout.
        arr = np.asarray(data, dtype=np.float64, order="C")
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={self.data!r})"

    # Thin operator sugar; all real work happens in the module functions.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape, dtype=np.float64))


def full(shape, value: Scalar) -> Tensor:
    return Tensor(np.full(shape, float(value), dtype=np.float64))


class _Node:
    """One recorded primitive: operand refs plus a backward rule."""

    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn) -> None:
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_tls = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def _current_tape() -> Optional["GradTape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class GradTape:
    """Ordered record of primitive operations for one differentiation pass.

    Use as a context manager; ops executed inside the ``with`` block are
    recorded. A tape is meant to live for one training step and be discarded
    (or cleared) afterwards -- nothing is retained implicitly.
    """

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._outputs: set[int] = set()

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise TapeError("GradTape exited out of order")
        stack.pop()

    def _record(self, node: _Node) -> None:
        self.nodes.append(node)
        self._outputs.add(id(node.output))

    def produced(self, t: Tensor) -> bool:
        return id(t) in self._outputs

    def clear(self) -> None:
        self.nodes.clear()
        self._outputs.clear()


def record_op(
    inputs: Sequence[Tensor],
    out_data: np.ndarray,
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    """Wrap ``out_data`` in a Tensor, recording a backward rule on the active tape.

    ``backward_fn`` receives the gradient w.r.t. the output and returns one
    gradient array (or None) per input. Extension point for fused primitives
    defined outside this module.
    """
    out = Tensor(out_data)
    tape = _current_tape()
    if tape is not None:
        tape._record(_Node(tuple(inputs), out, backward_fn))
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(tape: GradTape, loss: Tensor) -> None:
    """Populate ``grad`` on every tensor reachable from ``loss`` through the tape."""
    if loss.size != 1:
        raise TapeError(f"loss must be scalar, got shape {loss.shape}")
    if not tape.produced(loss):
        raise TapeError("loss tensor was not produced under this tape")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.output.grad
        if g is None:
            continue
        input_grads = node.backward_fn(g)
        for t, ig in zip(node.inputs, input_grads):
            if ig is not None:
                _accumulate(t, ig)


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard 2-D matrix product with recorded backward rule."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul: incompatible shapes {a.shape} and {b.shape}"
        )
    out = a.data @ b.data

    def bwd(g: np.ndarray):
        return g @ b.data.T, a.data.T @ g

    return record_op((a, b), out, bwd)


def add(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if isinstance(b, Tensor):
        _require_same_shape(a, b, "add")
        return record_op((a, b), a.data + b.data, lambda g: (g, g))
    bv = float(b)
    return record_op((a,), a.data + bv, lambda g: (g,))


def sub(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if isinstance(b, Tensor):
        _require_same_shape(a, b, "sub")
        return record_op((a, b), a.data - b.data, lambda g: (g, -g))
    bv = float(b)
    return record_op((a,), a.data - bv, lambda g: (g,))


def mul(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if isinstance(b, Tensor):
        _require_same_shape(a, b, "mul")
        ad, bd = a.data, b.data
        return record_op((a, b), ad * bd, lambda g: (g * bd, g * ad))
    return scale(a, float(b))


def scale(a: Tensor, s: Scalar) -> Tensor:
    sv = float(s)
    return record_op((a,), a.data * sv, lambda g: (g * sv,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return record_op((a,), y, lambda g: (g * (1.0 - y * y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return record_op((a,), y, lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return record_op((a,), np.log(ad), lambda g: (g / ad,))


def heaviside_shifted(
    a: Tensor,
    theta: Scalar,
    surrogate: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Tensor:
    """Elementwise step: 1 where ``a >= theta`` else 0 (boundary inclusive).

    The true derivative is zero almost everywhere; ``surrogate``, when given,
    supplies the backward rule as a function of the pre-threshold values.
    """
    tv = float(theta)
    out = np.where(a.data >= tv, 1.0, 0.0)
    if surrogate is None:
        bwd = lambda g: (np.zeros_like(g),)  # noqa: E731
    else:
        ad = a.data

        def bwd(g: np.ndarray):
            return (g * surrogate(ad),)

    return record_op((a,), out, bwd)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-N bias vector to every row of an M-by-N tensor."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"add_bias: incompatible shapes {x.shape} and {b.shape}"
        )
    return record_op((x, b), x.data + b.data, lambda g: (g, g.sum(axis=0)))


def reshape(a: Tensor, shape) -> Tensor:
    new_shape = tuple(int(s) for s in shape)
    old_shape = a.shape
    out = np.ascontiguousarray(a.data).reshape(new_shape)
    return record_op((a,), out, lambda g: (g.reshape(old_shape),))


def max_over_axis(a: Tensor, axis: int) -> Tensor:
    """Maximum along ``axis`` (axis removed); argmax recorded for backward routing."""
    if not 0 <= axis < a.data.ndim:
        raise ShapeMismatchError(f"max_over_axis: axis {axis} out of range for shape {a.shape}")
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    in_shape = a.shape

    def bwd(g: np.ndarray):
        ga = np.zeros(in_shape, dtype=np.float64)
        np.put_along_axis(ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (ga,)

    return record_op((a,), out, bwd)


def mean_over_axis(a: Tensor, axis: int) -> Tensor:
    if not 0 <= axis < a.data.ndim:
        raise ShapeMismatchError(f"mean_over_axis: axis {axis} out of range for shape {a.shape}")
    n = a.shape[axis]
    out = a.data.mean(axis=axis)

    def bwd(g: np.ndarray):
        return (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)

    return record_op((a,), out, bwd)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    out = np.asarray(a.data.sum())

    def bwd(g: np.ndarray):
        return (np.full(shape, g.item(), dtype=np.float64),)

    return record_op((a,), out, bwd)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "heaviside_shifted": heaviside_shifted,
}


def elementwise(op: str, a: Tensor, b: Union[Tensor, Scalar, None] = None, **kwargs) -> Tensor:
    """Dispatch an elementwise op by name: add, sub, mul, scale, heaviside_shifted."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(a, b, **kwargs)


def reduce(op: str, a: Tensor, axis: Optional[int] = None) -> Tensor:
    """Dispatch a reduction by name: max_over_axis, mean_over_axis, sum."""
    if op == "max_over_axis":
        return max_over_axis(a, int(axis))
    if op == "mean_over_axis":
        return mean_over_axis(a, int(axis))
    if op == "sum":
        return sum_all(a)
    raise ValueError(f"unknown reduce op {op!r}")


def check_gradients(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5
) -> float:
    """Compare tape gradients of scalar ``f(x)`` against central differences.

    Returns max over elements of |analytic - numeric| / (|numeric| + 1e-8).
    ``f`` must be deterministic (freeze any randomness before calling) and
    smooth at ``x``; substitute the surrogate for hard thresholds when
    checking spiking paths. Non-finite differences yield ``inf``. ``x`` is
    restored to its original values on return.
    """
    with GradTape() as tape:
        out = f(x)
    backward(tape, out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    flat = x.data.reshape(-1)
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = f(x).item()
        flat[i] = orig - eps
        f_minus = f(x).item()
        flat[i] = orig
        numeric[i] = (f_plus - f_minus) / (2.0 * eps)

    numeric = numeric.reshape(x.shape)
    diff = np.abs(analytic - numeric)
    rel = diff / (np.abs(numeric) + 1e-8)
    if not np.all(np.isfinite(rel)):
        return float("inf")
    return float(rel.max()) if rel.size else 0.0
