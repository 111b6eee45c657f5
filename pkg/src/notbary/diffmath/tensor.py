"""Reverse-mode differentiation over dense float64 numpy arrays.

A `Node` holds a value array, a lazily allocated gradient and the rules
for pushing gradients back to the nodes it was computed from. Graphs are
built eagerly by ordinary arithmetic on nodes (tape style) and discarded
after each backward pass.

Usage example:
    w = parameter(np.array([3.0, 4.0]))
    loss = (w * w).sum() * 0.5
    loss.backward()
    w.grad  # array([3., 4.])
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ContractError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
Operand = Union["Node", ArrayLike]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


def as_array(value: ArrayLike) -> np.ndarray:
    """Return ``value`` as a float64 ndarray (no copy when already one)."""
    return np.asarray(value, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Node:
    """A value in a dynamically built computation graph."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward")
    # ndarray <op> Node dispatches to the reflected Node operator
    __array_ufunc__ = None

    def __init__(
        self,
        value: ArrayLike,
        *,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Node", ...] = (),
        _backward: Optional[BackwardFn] = None,
    ) -> None:
        self.value = as_array(value)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Node{label} shape={self.shape} requires_grad={self.requires_grad}>"

    # ---------------------- introspection ----------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value.reshape(()))

    def detach(self) -> "Node":
        """A constant node sharing this node's value."""
        return Node(self.value)

    def zero_grad(self) -> None:
        self.grad = None

    # ---------------------- backward pass ----------------------

    def backward(self) -> None:
        """Populate ``grad`` on every node that requires it and feeds this scalar.

        Leaf gradients accumulate across calls; call `zero_grad` between
        optimizer steps.

        Raises:
            ContractError: If this node is not a scalar.
        """
        if self.value.size != 1:
            raise ContractError(
                "backward() needs a scalar root", {"shape": list(self.shape)}
            )
        if not self.requires_grad:
            return
        pending = {id(self): np.ones_like(self.value)}
        for node in reversed(_topological_order(self)):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g if node.grad is None else node.grad + g
                continue
            node.grad = g
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or parent is None:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg

    # ---------------------- elementwise arithmetic ----------------------

    def __add__(self, other: Operand) -> "Node":
        b = as_node(other)
        a_shape, b_shape = self.shape, b.shape
        return _make(
            self.value + b.value,
            (self, b),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __sub__(self, other: Operand) -> "Node":
        b = as_node(other)
        a_shape, b_shape = self.shape, b.shape
        return _make(
            self.value - b.value,
            (self, b),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
        )

    def __rsub__(self, other: Operand) -> "Node":
        return as_node(other) - self

    def __mul__(self, other: Operand) -> "Node":
        b = as_node(other)
        a = self
        return _make(
            a.value * b.value,
            (a, b),
            lambda g: (
                _unbroadcast(g * b.value, a.shape),
                _unbroadcast(g * a.value, b.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> "Node":
        b = as_node(other)
        a = self
        return _make(
            a.value / b.value,
            (a, b),
            lambda g: (
                _unbroadcast(g / b.value, a.shape),
                _unbroadcast(-g * a.value / (b.value * b.value), b.shape),
            ),
        )

    def __rtruediv__(self, other: Operand) -> "Node":
        return as_node(other) / self

    def __neg__(self) -> "Node":
        return _make(-self.value, (self,), lambda g: (-g,))

    def __pow__(self, exponent: float) -> "Node":
        if isinstance(exponent, Node):
            raise ContractError("only constant exponents are supported")
        p = float(exponent)
        x = self.value
        return _make(x**p, (self,), lambda g: (g * p * x ** (p - 1.0),))

    def __matmul__(self, other: Operand) -> "Node":
        b = as_node(other)
        a = self
        if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
            raise ContractError(
                "matmul shape mismatch", {"left": list(a.shape), "right": list(b.shape)}
            )

        def backward(g: np.ndarray):
            ga = g @ b.value.T
            a2 = a.value.reshape(-1, a.shape[-1])
            gb = a2.T @ g.reshape(-1, b.shape[1])
            return ga, gb

        return _make(a.value @ b.value, (a, b), backward)

    # ---------------------- unary functions ----------------------

    def exp(self) -> "Node":
        out = np.exp(self.value)
        return _make(out, (self,), lambda g: (g * out,))

    def log(self) -> "Node":
        x = self.value
        return _make(np.log(x), (self,), lambda g: (g / x,))

    def sqrt(self) -> "Node":
        out = np.sqrt(self.value)
        return _make(out, (self,), lambda g: (g * 0.5 / out,))

    def sin(self) -> "Node":
        x = self.value
        return _make(np.sin(x), (self,), lambda g: (g * np.cos(x),))

    def cos(self) -> "Node":
        x = self.value
        return _make(np.cos(x), (self,), lambda g: (-g * np.sin(x),))

    def relu(self) -> "Node":
        mask = self.value > 0.0
        return _make(np.where(mask, self.value, 0.0), (self,), lambda g: (g * mask,))

    def softplus(self) -> "Node":
        x = self.value
        return _make(
            np.logaddexp(0.0, x), (self,), lambda g: (g * _sigmoid(x),)
        )

    def norm(self, axis: int = -1, keepdims: bool = False) -> "Node":
        """Euclidean norm along ``axis``; the subgradient at 0 is taken as 0."""
        x = self.value
        n = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))

        def backward(g: np.ndarray):
            gk = g if keepdims else np.expand_dims(g, axis)
            safe = np.where(n > 0.0, n, 1.0)
            return (np.where(n > 0.0, gk * x / safe, 0.0),)

        out = n if keepdims else np.squeeze(n, axis=axis)
        return _make(out, (self,), backward)

    # ---------------------- reductions and shape ----------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Node":
        shape = self.shape

        def backward(g: np.ndarray):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return _make(self.value.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Node":
        if axis is None:
            count = self.value.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Node":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return _make(self.value.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def broadcast_to(self, shape: Tuple[int, ...]) -> "Node":
        old = self.shape
        return _make(
            np.broadcast_to(self.value, shape).copy(),
            (self,),
            lambda g: (_unbroadcast(g, old),),
        )

    @property
    def T(self) -> "Node":
        return _make(self.value.T, (self,), lambda g: (g.T,))

    def __getitem__(self, index) -> "Node":
        shape = self.shape

        def backward(g: np.ndarray):
            out = np.zeros(shape)
            if _is_basic_index(index):
                out[index] += g
            else:
                np.add.at(out, index, g)
            return (out,)

        return _make(self.value[index], (self,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def _make(value: np.ndarray, parents: Tuple[Node, ...], backward: BackwardFn) -> Node:
    # parents frozen at build time stay constants for this graph
    live = tuple(p if p.requires_grad else None for p in parents)
    if any(p is not None for p in live):
        return Node(value, requires_grad=True, _parents=live, _backward=backward)
    return Node(value)


def _topological_order(root: Node) -> List[Node]:
    order: List[Node] = []
    visited = set()
    stack: List[Tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent is not None and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_node(value: Operand) -> Node:
    """Wrap constants as non-differentiable nodes; pass nodes through."""
    return value if isinstance(value, Node) else Node(value)


def parameter(value: ArrayLike, name: Optional[str] = None) -> Node:
    """A trainable leaf node owning a private copy of ``value``."""
    return Node(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def concat(nodes: Sequence[Operand], axis: int = -1) -> Node:
    """Concatenate nodes along ``axis``."""
    parts = [as_node(n) for n in nodes]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backward(g: np.ndarray):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(parts))
        )

    return _make(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), backward)


def backward(root: Node, wrt: Optional[Iterable[Node]] = None) -> List[np.ndarray]:
    """Run a backward pass from ``root`` and return gradients for ``wrt``.

    Leaves untouched by the graph get a zero gradient of their own shape.
    Existing gradients on ``wrt`` are cleared first so the result is the
    gradient of this root alone.
    """
    targets = list(wrt) if wrt is not None else []
    for node in targets:
        node.zero_grad()
    root.backward()
    return [n.grad if n.grad is not None else np.zeros_like(n.value) for n in targets]


@contextmanager
def frozen(nodes: Iterable[Node]) -> Iterator[None]:
    """Treat ``nodes`` as constants for graphs built inside the block."""
    held = [n for n in nodes if n.requires_grad]
    for n in held:
        n.requires_grad = False
    try:
        yield
    finally:
        for n in held:
            n.requires_grad = True
