"""Tensors, the operation tape, and reverse-mode backward."""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "_node", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; the primitives live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.add(self, ops.scale(_wrap(other), -1.0))

    def __rsub__(self, other):
        from . import ops
        return ops.add(_wrap(other), ops.scale(self, -1.0))

    def __mul__(self, other):
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.multiply(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, _wrap(other))

    def __getitem__(self, index):
        from . import ops
        return ops.slice(self, index)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass(eq=False)
class Node:
    """One executed primitive: inputs, output and its vector-Jacobian product."""

    op: str
    inputs: Sequence[Tensor]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    tape: "Tape"
    index: int


@dataclass(eq=False)
class Tape:
    """Ordered record of primitives executed while this tape was active."""

    nodes: List[Node] = field(default_factory=list)

    def record(self, op, inputs, output, vjp) -> Node:
        node = Node(op, inputs, output, vjp, self, len(self.nodes))
        self.nodes.append(node)
        output._node = node
        return node

    def clear(self):
        for node in self.nodes:
            node.output._node = None
        self.nodes.clear()

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        _state().stack.append(self)
        return self

    def __exit__(self, *exc):
        _state().stack.pop()
        return False


class _State(threading.local):
    def __init__(self):
        self.stack: List[Tape] = [Tape()]
        self.enabled = True


_STATE = _State()


def _state() -> _State:
    return _STATE


def current_tape() -> Tape:
    return _STATE.stack[-1]


def grad_enabled() -> bool:
    return _STATE.enabled


@contextmanager
def no_grad():
    prev = _STATE.enabled
    _STATE.enabled = False
    try:
        yield
    finally:
        _STATE.enabled = prev


def make_output(op: str, data: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    """Wrap ``data`` and record it on the active tape when needed."""
    needs = _STATE.enabled and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        current_tape().record(op, inputs, out, vjp)
    return out


def backward(loss: Tensor, retain_tape: bool = False) -> None:
    """Populate ``.grad`` on every tensor in the ancestry of ``loss``.

    Leaves accumulate into an existing ``.grad``; recorded inputs outside the
    ancestry that require gradients get a zero gradient if they had none.
    """
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    node = loss._node
    if node is None:
        raise ValueError("backward: loss was not produced on a tape")
    tape = node.tape
    if not tape.nodes:
        raise ValueError("backward: tape is empty")

    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for n in reversed(tape.nodes[: node.index + 1]):
        g = grads.get(id(n.output))
        if g is None:
            for t in n.inputs:
                if t.requires_grad and t._node is None:
                    leaves.setdefault(id(t), t)
            continue
        n.output.grad = g
        in_grads = n.vjp(g)
        for t, gi in zip(n.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if t._node is None:
                leaves[id(t)] = t
                t.grad = gi.copy() if t.grad is None else t.grad + gi
            else:
                key = id(t)
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
    for t in leaves.values():
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
    if not retain_tape:
        tape.clear()
