import threading
from contextlib import contextmanager
from typing import Any, Iterator, Optional, Sequence, Union

import numpy as np

from src.ndtensor.errors import DimensionError, UsageError

_local = threading.local()
_default_dtype: type = np.float64

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]


def set_default_dtype(dtype: Any) -> None:
    """Switch between 64-bit (test) and 32-bit (fast) reals for new tensors."""
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise UsageError(f"Unsupported dtype {dtype}")
    _default_dtype = dtype


def get_default_dtype() -> type:
    return _default_dtype


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run the enclosed forward passes without recording a tape (per thread)."""
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


@contextmanager
def record_kinks() -> Iterator[list]:
    """Collect the branch pattern of every non-smooth op evaluated inside."""
    previous = getattr(_local, "kinks", None)
    _local.kinks = []
    try:
        yield _local.kinks
    finally:
        _local.kinks = previous


def note_kink(pattern: np.ndarray) -> None:
    kinks = getattr(_local, "kinks", None)
    if kinks is not None:
        kinks.append(np.asarray(pattern).copy())


class Function:
    """
    A differentiable operation recorded on the tape.

    Subclasses implement `forward` on raw arrays and `backward`, which maps the
    gradient of the output to one gradient (or None) per input.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, creator=fn if requires_grad else None)


class Tensor:
    """Dense row-major array that records the operations producing it."""

    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
    ):
        self.data = np.asarray(data, dtype=_default_dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.creator = creator

    # ---- structure -------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ---- arithmetic ------------------------------------------------------
    def __add__(self, other: Union["Tensor", float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            return Add.apply(self, other)
        return Shift.apply(self, c=float(other))

    __radd__ = __add__

    def __sub__(self, other: Union["Tensor", float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            return Sub.apply(self, other)
        return Shift.apply(self, c=-float(other))

    def __rsub__(self, other: Union[float, int]) -> "Tensor":
        return Shift.apply(Neg.apply(self), c=float(other))

    def __mul__(self, other: Union["Tensor", float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            return Mul.apply(self, other)
        return Scale.apply(self, c=float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Tensor", float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            return Div.apply(self, other)
        return Scale.apply(self, c=1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return MatMul.apply(self, other)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes: int) -> "Tensor":
        return Transpose.apply(self, axes=axes or None)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    # ---- differentiation -------------------------------------------------
    def backward(self) -> None:
        """
        Accumulate d(self)/d(leaf) into `.grad` of every reachable leaf that
        requires a gradient. Repeated calls accumulate.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        self.grad = _accumulate(self.grad, np.ones_like(self.data))
        for leaf, g in _backprop(self).values():
            if leaf is not self:
                leaf.grad = _accumulate(leaf.grad, g)


def _accumulate(current: Optional[np.ndarray], g: np.ndarray) -> np.ndarray:
    return g.copy() if current is None else current + g


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in visited:
            continue
        if expanded:
            visited.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        if node.creator is not None:
            for parent in node.creator.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def _backprop(root: Tensor) -> dict[int, tuple[Tensor, np.ndarray]]:
    """Return {id(leaf): (leaf, gradient)} for every leaf reached from root."""
    leaves: dict[int, tuple[Tensor, np.ndarray]] = {}
    if not root.requires_grad:
        return leaves
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(_topological_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.creator is None:
            leaves[id(node)] = (node, g)
            continue
        for parent, pg in zip(node.creator.inputs, node.creator.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return leaves


def grad(loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. params, without touching `.grad`."""
    if loss.data.size != 1:
        raise UsageError(f"grad() needs a scalar loss, got shape {loss.shape}")
    leaves = _backprop(loss)
    return [leaves[id(p)][1] if id(p) in leaves else np.zeros_like(p.data) for p in params]


def _check_same(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


class Add(Function):
    def forward(self, a, b):
        _check_same("add", a, b)
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        _check_same("sub", a, b)
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        _check_same("mul", a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Div(Function):
    def forward(self, a, b):
        _check_same("div", a, b)
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        return grad / self.b, -grad * self.a / (self.b * self.b)


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Scale(Function):
    def forward(self, a, c: float):
        self.c = c
        return a * c

    def backward(self, grad):
        return (grad * self.c,)


class Shift(Function):
    def forward(self, a, c: float):
        return a + c

    def backward(self, grad):
        return (grad,)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class Reshape(Function):
    def forward(self, a, shape):
        self.in_shape = a.shape
        if int(np.prod(shape)) != a.size and -1 not in shape:
            raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}")
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    def forward(self, a, axes):
        self.axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Sum(Function):
    def forward(self, a, axis, keepdims):
        self.in_shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class Mean(Function):
    def forward(self, a, axis, keepdims):
        self.in_shape, self.axis, self.keepdims = a.shape, axis, keepdims
        self.count = a.size if axis is None else a.shape[axis]
        return np.mean(a, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, self.in_shape).copy(),)
