"""
Dense 2-D tensors with tape-based reverse-mode differentiation.

Every value is a float64 matrix. Operations whose inputs require gradients
record themselves on the calling thread's tape; ``backward`` replays that tape
in reverse recording order and then clears it, so the tape is rebuilt by each
forward pass.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.errors import ContractError, DimensionError, InputError, NumericalError

ArrayLike = Union[np.ndarray, Sequence, float, int]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

COSINE_EPS = 1e-12


class Tensor:
    """
    A rows × cols float64 matrix that can take part in the gradient tape.

    ``grad`` stays None until a backward pass reaches the tensor and has the
    same shape as ``data`` afterwards. Scalars are 1×1 and vectors are rows.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        """
        Initialize a tensor from array-like data (always copied).

        Args:
            data: Scalar, 1-D (treated as a row) or 2-D values
            requires_grad: Whether gradients should flow into this tensor
            name: Optional label used in error messages

        Raises:
            DimensionError: If the data has more than two dimensions
            NumericalError: If the data contains NaN or Inf
        """
        array = np.array(data, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1, 1)
        elif array.ndim == 1:
            array = array.reshape(1, -1)
        elif array.ndim != 2:
            raise DimensionError(f"Tensor data must be at most 2-D, got shape {array.shape}")
        _check_finite(array, name or "tensor")

        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool, op_name: str) -> "Tensor":
        _check_finite(array, op_name)
        out = cls.__new__(cls)
        out.data = array
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        return out

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        """
        Return the value of a 1×1 tensor.

        Raises:
            ContractError: If the tensor is not a scalar
        """
        if self.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Copy of the values, outside the tape."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise DimensionError(f"Gradient shape {grad.shape} does not match tensor shape {self.shape}")
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def __add__(self, other: "Operand") -> "Tensor":
        return add(self, _as_tensor(other))

    def __radd__(self, other: "Operand") -> "Tensor":
        return add(_as_tensor(other), self)

    def __sub__(self, other: "Operand") -> "Tensor":
        return sub(self, _as_tensor(other))

    def __rsub__(self, other: "Operand") -> "Tensor":
        return sub(_as_tensor(other), self)

    def __mul__(self, other: "Operand") -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other: "Operand") -> "Tensor":
        return self.__mul__(other)

    def __truediv__(self, other: float) -> "Tensor":
        return scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


Operand = Union[Tensor, float, int]


@dataclass
class TapeRecord:
    """One recorded operation: its inputs, its output and the local backward rule."""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: BackwardFn


class Tape:
    """
    Ordered list of recorded operations for one worker thread.

    Recording order is a topological order of the graph, so walking it backwards
    visits each op after every consumer of its output.
    """

    def __init__(self):
        self.records: List[TapeRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn) -> None:
        self.records.append(TapeRecord(op, inputs, output, backward_fn))

    def clear(self) -> None:
        self.records.clear()

    def backward(self, loss: Tensor) -> None:
        """
        Populate ``grad`` on every requires_grad ancestor of ``loss``.

        Gradients are added to whatever the leaves already hold. The tape is
        cleared afterwards.

        Args:
            loss: Scalar output of a recorded forward pass

        Raises:
            ContractError: If loss is not a scalar or is not on the tape
            NumericalError: If a gradient becomes non-finite
        """
        if loss.shape != (1, 1):
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise ContractError("backward() called on a tensor that is not on the gradient tape")

        loss._accumulate(np.ones((1, 1)))
        try:
            for record in reversed(self.records):
                upstream = record.output.grad
                if upstream is None:
                    continue
                input_grads = record.backward_fn(upstream)
                for tensor, grad in zip(record.inputs, input_grads):
                    if grad is None or not tensor.requires_grad:
                        continue
                    _check_finite(grad, f"grad of {record.op}")
                    tensor._accumulate(grad)
        finally:
            self.clear()


_local = threading.local()


def get_tape() -> Tape:
    """Return the calling thread's tape, creating it on first use."""
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = Tape()
        _local.tape = tape
    return tape


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording on the calling thread for the duration of the block."""
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


def backward(loss: Tensor) -> None:
    """Run the reverse pass of the calling thread's tape from ``loss``."""
    get_tape().backward(loss)


def _check_finite(array: np.ndarray, label: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"Non-finite value produced by {label}")


def _as_tensor(value: Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(op: str, array: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    tracked = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(array, tracked, op)
    if tracked:
        get_tape().record(op, inputs, out, backward_fn)
    return out


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    # equal shapes, a 1×n row against m×n, or a 1×1 scalar
    if a.shape == b.shape:
        return
    for small, big in ((a, b), (b, a)):
        if small.shape == (1, 1):
            return
        if small.rows == 1 and small.cols == big.cols:
            return
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape[0] == 1 and grad.shape[0] != 1:
        grad = grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product ``a @ b``.

    Raises:
        DimensionError: If the inner dimensions differ
    """
    if a.cols != b.rows:
        raise DimensionError(f"matmul: inner dimensions differ ({a.shape} x {b.shape})")

    def backward_fn(grad: np.ndarray):
        return grad @ b.data.T, a.data.T @ grad

    return _result("matmul", a.data @ b.data, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1×n row or a 1×1 scalar is broadcast over rows."""
    _check_broadcast(a, b, "add")

    def backward_fn(grad: np.ndarray):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _result("add", a.data + b.data, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference with the same broadcasting as ``add``."""
    _check_broadcast(a, b, "sub")

    def backward_fn(grad: np.ndarray):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _result("sub", a.data - b.data, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with the same broadcasting as ``add``."""
    _check_broadcast(a, b, "mul")

    def backward_fn(grad: np.ndarray):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return _result("mul", a.data * b.data, (a, b), backward_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a constant."""

    def backward_fn(grad: np.ndarray):
        return (grad * factor,)

    return _result("scale", a.data * factor, (a,), backward_fn)


def relu(a: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    mask = a.data > 0.0

    def backward_fn(grad: np.ndarray):
        return (grad * mask,)

    return _result("relu", np.where(mask, a.data, 0.0), (a,), backward_fn)


def sum_all(a: Tensor) -> Tensor:
    """Sum of every entry as a 1×1 tensor."""

    def backward_fn(grad: np.ndarray):
        return (np.full(a.shape, grad[0, 0]),)

    return _result("sum", np.array([[a.data.sum()]]), (a,), backward_fn)


def mean_all(a: Tensor) -> Tensor:
    """Mean of every entry as a 1×1 tensor."""
    count = a.data.size

    def backward_fn(grad: np.ndarray):
        return (np.full(a.shape, grad[0, 0] / count),)

    return _result("mean", np.array([[a.data.mean()]]), (a,), backward_fn)


def take_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    """
    Gather rows of ``a`` in the given order (repeats allowed).

    Raises:
        InputError: If an index is out of range
    """
    index = np.asarray(indices, dtype=np.int64).reshape(-1)
    if index.size and (index.min() < 0 or index.max() >= a.rows):
        raise InputError(f"take_rows: index out of range for {a.rows} rows")

    def backward_fn(grad: np.ndarray):
        full = np.zeros_like(a.data)
        np.add.at(full, index, grad)
        return (full,)

    return _result("take_rows", a.data[index], (a,), backward_fn)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """
    Mean over rows of ``-log softmax(logits)[label]``.

    Args:
        logits: b×K scores
        labels: One class index per row

    Returns:
        1×1 loss tensor

    Raises:
        InputError: If there are no rows, the label count differs, or a label is out of range
    """
    target = np.asarray(labels, dtype=np.int64).reshape(-1)
    batch, num_classes = logits.shape
    if batch < 1:
        raise InputError("softmax_cross_entropy needs at least one row")
    if target.size != batch:
        raise InputError(f"softmax_cross_entropy: {target.size} labels for {batch} rows")
    if target.min() < 0 or target.max() >= num_classes:
        raise InputError(f"softmax_cross_entropy: label out of range [0, {num_classes})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    totals = exp.sum(axis=1, keepdims=True)
    rows = np.arange(batch)
    losses = np.log(totals[:, 0]) - shifted[rows, target]
    probs = exp / totals

    def backward_fn(grad: np.ndarray):
        delta = probs.copy()
        delta[rows, target] -= 1.0
        return (delta * (grad[0, 0] / batch),)

    return _result("softmax_cross_entropy", np.array([[losses.mean()]]), (logits,), backward_fn)


def cosine_similarity_matrix(a: Tensor, b: Tensor, eps: float = COSINE_EPS) -> Tensor:
    """
    Pairwise cosine similarity between the rows of ``a`` (n×d) and ``b`` (m×d).

    The denominator is ``|a_i| |b_j| + eps`` so zero rows give similarity 0.

    Raises:
        DimensionError: If the row widths differ
    """
    if a.cols != b.cols:
        raise DimensionError(f"cosine_similarity: widths differ ({a.cols} vs {b.cols})")

    norm_a = np.linalg.norm(a.data, axis=1, keepdims=True)
    norm_b = np.linalg.norm(b.data, axis=1, keepdims=True)
    dots = a.data @ b.data.T
    denom = norm_a @ norm_b.T + eps
    sims = dots / denom

    def backward_fn(grad: np.ndarray):
        weighted = grad / denom
        shared = grad * dots / (denom * denom)
        safe_a = np.where(norm_a > 0.0, norm_a, 1.0)
        safe_b = np.where(norm_b > 0.0, norm_b, 1.0)
        grad_a = weighted @ b.data - a.data * ((shared * norm_b.T).sum(axis=1, keepdims=True) / safe_a)
        grad_b = weighted.T @ a.data - b.data * ((shared.T * norm_a.T).sum(axis=1, keepdims=True) / safe_b)
        return grad_a, grad_b

    return _result("cosine_similarity", sims, (a, b), backward_fn)


def cosine_similarity(u: Tensor, v: Tensor, eps: float = COSINE_EPS) -> Tensor:
    """
    Cosine similarity of two row vectors as a 1×1 tensor.

    Raises:
        DimensionError: If either input is not a single row or the lengths differ
    """
    if u.rows != 1 or v.rows != 1:
        raise DimensionError(f"cosine_similarity expects row vectors, got {u.shape} and {v.shape}")
    return cosine_similarity_matrix(u, v, eps)
