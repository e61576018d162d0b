"""Small dense-tensor library with reverse-mode automatic differentiation.

Values are float64 numpy arrays in row-major order. Differentiation is
tape-free: every op records its operands and a backward closure, and
``backward()`` walks the implicit graph in reverse topological order.

There is no broadcasting except scalar-with-tensor; mismatched shapes
raise :class:`ShapeError`. Reductions use numpy's fixed left-to-right
summation, so forward results are bitwise deterministic.
"""

from __future__ import annotations

from typing import Callable, Dict, Iterator, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class InvalidAxisError(ValueError):
    """Axis index outside the operand's rank."""


class GraphError(RuntimeError):
    """Backward called on something that is not a scalar graph output."""


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.size == 0:
        raise ShapeError("empty tensor is not allowed")
    return arr


class Tensor:
    """A dense array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents: Tuple["Tensor", ...] = (),
                 _backward: Callable[[np.ndarray], None] | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    # ---- basic introspection -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    # ---- arithmetic ----------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    @staticmethod
    def _binary_shapes(a: "Tensor", b: "Tensor", op: str) -> None:
        if a.shape == b.shape or a.data.size == 1 or b.data.size == 1:
            return
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ "
                         "(only scalar-with-tensor broadcasting is allowed)")

    @staticmethod
    def _reduce_to(g: np.ndarray, t: "Tensor") -> np.ndarray:
        # scalar operand broadcast against a tensor: fold the gradient back
        if g.shape == t.shape:
            return g
        return np.sum(g).reshape(t.shape)

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.float64(other))
        Tensor._binary_shapes(self, other, "add")
        out = Tensor(self.data + other.data, (self, other))

        def backward(g: np.ndarray) -> None:
            self._accumulate(Tensor._reduce_to(g, self))
            other._accumulate(Tensor._reduce_to(g, other))

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.data, (self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.float64(other))
        return self + (-other)

    def __rsub__(self, other) -> "Tensor":
        return (-self) + other

    def __mul__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.float64(other))
        Tensor._binary_shapes(self, other, "mul")
        out = Tensor(self.data * other.data, (self, other))

        def backward(g: np.ndarray) -> None:
            self._accumulate(Tensor._reduce_to(g * other.data, self))
            other._accumulate(Tensor._reduce_to(g * self.data, other))

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    # ---- shape manipulation ----------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        if int(np.prod(shape)) != self.data.size:
            raise ShapeError(f"cannot reshape {self.shape} to {shape}")
        out = Tensor(self.data.reshape(shape), (self,))
        out._backward = lambda g: self._accumulate(g.reshape(self.shape))
        return out

    def transpose(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError(f"transpose requires rank 2, got shape {self.shape}")
        out = Tensor(self.data.T.copy(), (self,))
        out._backward = lambda g: self._accumulate(g.T)
        return out

    def rows(self, start: int, stop: int) -> "Tensor":
        """Contiguous row slice [start, stop) along axis 0."""
        n = self.shape[0]
        if not (0 <= start < stop <= n):
            raise ShapeError(f"row slice [{start}, {stop}) out of range for {self.shape}")
        out = Tensor(self.data[start:stop].copy(), (self,))

        def backward(g: np.ndarray) -> None:
            full = np.zeros_like(self.data)
            full[start:stop] = g
            self._accumulate(full)

        out._backward = backward
        return out

    # ---- nonlinearities ----------------------------------------------------

    def sigmoid(self) -> "Tensor":
        val = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(val, (self,))
        out._backward = lambda g: self._accumulate(g * val * (1.0 - val))
        return out

    def relu(self) -> "Tensor":
        out = Tensor(np.maximum(0.0, self.data), (self,))
        out._backward = lambda g: self._accumulate(g * (self.data > 0.0))
        return out

    def tanh(self) -> "Tensor":
        val = np.tanh(self.data)
        out = Tensor(val, (self,))
        out._backward = lambda g: self._accumulate(g * (1.0 - val * val))
        return out

    def log(self) -> "Tensor":
        out = Tensor(np.log(self.data), (self,))
        out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def clamp(self, lo: float, hi: float) -> "Tensor":
        """Clip values to [lo, hi]; gradient passes only where unclipped."""
        val = np.clip(self.data, lo, hi)
        inside = (self.data > lo) & (self.data < hi)
        out = Tensor(val, (self,))
        out._backward = lambda g: self._accumulate(g * inside)
        return out

    def softmax(self) -> "Tensor":
        """Softmax over the last axis, numerically stabilized."""
        if self.shape[-1] < 1:
            raise ShapeError("softmax needs last-axis extent >= 1")
        shifted = self.data - np.max(self.data, axis=-1, keepdims=True)
        e = np.exp(shifted)
        val = e / np.sum(e, axis=-1, keepdims=True)
        out = Tensor(val, (self,))

        def backward(g: np.ndarray) -> None:
            dot = np.sum(g * val, axis=-1, keepdims=True)
            self._accumulate(val * (g - dot))

        out._backward = backward
        return out

    # ---- reductions ----------------------------------------------------------

    def _check_axis(self, axis: int) -> None:
        if not (0 <= axis < self.ndim):
            raise InvalidAxisError(f"axis {axis} out of range for shape {self.shape}")

    def sum(self, axis: int | None = None) -> "Tensor":
        if axis is None:
            out = Tensor(np.sum(self.data).reshape(()), (self,))
            out._backward = lambda g: self._accumulate(np.full_like(self.data, float(g)))
            return out
        self._check_axis(axis)
        out = Tensor(np.sum(self.data, axis=axis), (self,))
        out._backward = lambda g: self._accumulate(
            np.repeat(np.expand_dims(g, axis), self.shape[axis], axis=axis))
        return out

    def mean(self, axis: int | None = None) -> "Tensor":
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis) * (1.0 / n)

    def max(self, axis: int = 0) -> "Tensor":
        """Max along ``axis``; on ties the gradient goes to the lowest index."""
        self._check_axis(axis)
        out = Tensor(np.max(self.data, axis=axis), (self,))
        argmax = np.argmax(self.data, axis=axis)  # first maximal index

        def backward(g: np.ndarray) -> None:
            full = np.zeros_like(self.data)
            idx = list(np.indices(out.shape))
            idx.insert(axis, argmax)
            full[tuple(idx)] = g
            self._accumulate(full)

        out._backward = backward
        return out

    # ---- backward ----------------------------------------------------------

    def backward(self) -> None:
        """Populate grads of all tensors reachable from this scalar output."""
        if self.data.size != 1:
            raise GraphError(f"backward requires a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


# ---- free functions --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul requires rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data @ b.data, (a, b))

    def backward(g: np.ndarray) -> None:
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    out._backward = backward
    return out


def concat(a: Tensor, b: Tensor, axis: int = 0) -> Tensor:
    if a.ndim != b.ndim:
        raise ShapeError(f"concat rank mismatch: {a.shape} vs {b.shape}")
    if not (0 <= axis < a.ndim):
        raise InvalidAxisError(f"axis {axis} out of range for shape {a.shape}")
    for ax in range(a.ndim):
        if ax != axis and a.shape[ax] != b.shape[ax]:
            raise ShapeError(f"concat: shapes {a.shape} and {b.shape} "
                             f"differ along axis {ax}")
    split_at = a.shape[axis]
    out = Tensor(np.concatenate([a.data, b.data], axis=axis), (a, b))

    def backward(g: np.ndarray) -> None:
        ga, gb = np.split(g, [split_at], axis=axis)
        a._accumulate(ga)
        b._accumulate(gb)

    out._backward = backward
    return out


def concat_all(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("concat_all of zero tensors")
    out = parts[0]
    for p in parts[1:]:
        out = concat(out, p, axis)
    return out


def split(t: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    """Inverse of concat: cut ``t`` into pieces of the given extents."""
    if not (0 <= axis < t.ndim):
        raise InvalidAxisError(f"axis {axis} out of range for shape {t.shape}")
    if sum(sizes) != t.shape[axis]:
        raise ShapeError(f"split sizes {sizes} do not cover extent {t.shape[axis]}")
    pieces = []
    start = 0
    for size in sizes:
        sl = [slice(None)] * t.ndim
        sl[axis] = slice(start, start + size)
        piece = Tensor(t.data[tuple(sl)].copy(), (t,))

        def backward(g: np.ndarray, sl=tuple(sl)) -> None:
            full = np.zeros_like(t.data)
            full[sl] = g
            t._accumulate(full)

        piece._backward = backward
        pieces.append(piece)
        start += size
    return pieces


class ParameterSet:
    """Named tensors with deterministic (lexicographic) iteration order."""

    def __init__(self, items: Dict[str, Tensor] | None = None):
        self._items: Dict[str, Tensor] = {}
        if items:
            for name, t in items.items():
                self.add(name, t)

    def add(self, name: str, t: Tensor) -> Tensor:
        if not name or not name.isascii():
            raise ValueError(f"parameter name must be non-empty ASCII: {name!r}")
        if name in self._items:
            raise ValueError(f"duplicate parameter name: {name}")
        self._items[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __len__(self) -> int:
        return len(self._items)

    def names(self) -> list[str]:
        return sorted(self._items)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        for name in sorted(self._items):
            yield name, self._items[name]

    def copy_values(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.items()}

    def load_values(self, values: Dict[str, np.ndarray]) -> None:
        for name, t in self.items():
            src = values[name]
            if src.shape != t.data.shape:
                raise ShapeError(f"parameter {name}: shape {src.shape} "
                                 f"does not match {t.data.shape}")
            t.data = src.astype(np.float64).copy()


def grad_check(f: Callable[[ParameterSet], Tensor], params: ParameterSet,
               eps: float = 1e-5) -> float:
    """Compare analytic gradients of ``f`` against central finite differences.

    Returns the max over all coordinates of
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    out = f(params)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise GraphError("grad_check requires f to return a scalar tensor")
    out.backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.items()}

    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f(params).item()
            flat[i] = orig - eps
            f_minus = f(params).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(1e-8, abs(a_flat[i]) + abs(numeric))
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst
