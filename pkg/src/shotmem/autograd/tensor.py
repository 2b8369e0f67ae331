"""Dense float64 tensors with reverse-mode differentiation.

Every op in :mod:`shotmem.autograd.ops` produces a :class:`Tensor` that keeps a
reference to its parents and a closure mapping the output gradient to parent
gradients. ``backward`` walks that graph in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class TensorError(Exception):
    """Base class for tensor-core errors."""


class ShapeError(TensorError):
    def __init__(self, node: str, expected, actual):
        self.node = node
        self.expected = expected
        self.actual = actual
        super().__init__(f"{node}: expected shape {expected}, got {actual}")


class NumericError(TensorError):
    pass


class StateError(TensorError):
    pass


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, *, check: bool = True):
        arr = np.array(data, dtype=np.float64, copy=True)
        if check and not np.all(np.isfinite(arr)):
            raise NumericError("tensor contains non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.op = "leaf"

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NumericError(f"{op}: non-finite output")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", (), self.shape)
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, check=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # Operator sugar; the implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def backward(self, seed=None) -> None:
        backward(self, seed)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, requires_grad=False)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(out: Tensor, seed=None) -> None:
    """Accumulate d(out)/d(leaf) into ``leaf.grad`` for every requires_grad leaf.

    ``seed`` defaults to ones for a single-element output. Leaf gradients are
    summed across calls; call ``zero_grad`` to reset.
    """
    if not out.requires_grad:
        raise StateError("backward called on a tensor with no recorded graph")
    if seed is None:
        if out.data.size != 1:
            raise ShapeError("backward(seed)", "scalar output or explicit seed", out.shape)
        seed_arr = np.ones_like(out.data)
    else:
        seed_arr = np.asarray(seed.data if isinstance(seed, Tensor) else seed, dtype=np.float64)
        if seed_arr.shape != out.shape:
            raise ShapeError("backward(seed)", out.shape, seed_arr.shape)

    grads: dict[int, np.ndarray] = {id(out): seed_arr}
    for node in reversed(_topo_order(out)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


class OpGraph:
    """A reusable forward function with an explicit forward/backward lifecycle.

    ``fn`` receives the named input tensors as keyword arguments and returns a
    Tensor or a dict of Tensors. ``backward`` differentiates the output named
    ``output`` (or the single output) and returns the gradients of every
    requires_grad input, keyed by input name.
    """

    def __init__(self, fn: Callable[..., "Tensor | dict[str, Tensor]"], name: str = "graph"):
        self.fn = fn
        self.name = name
        self._inputs: dict[str, Tensor] | None = None
        self._outputs: dict[str, Tensor] | None = None

    def forward(self, **inputs: Tensor) -> dict[str, Tensor]:
        bound = {k: as_tensor(v) for k, v in inputs.items()}
        result = self.fn(**bound)
        outputs = result if isinstance(result, dict) else {"out": result}
        self._inputs = bound
        self._outputs = outputs
        return outputs

    def backward(self, seed=None, output: str | None = None) -> dict[str, np.ndarray]:
        if self._outputs is None or self._inputs is None:
            raise StateError(f"{self.name}: backward before forward")
        if output is None:
            if len(self._outputs) != 1:
                raise StateError(f"{self.name}: several outputs, name one")
            output = next(iter(self._outputs))
        backward(self._outputs[output], seed)
        return {k: t.grad for k, t in self._inputs.items() if t.requires_grad and t.grad is not None}
