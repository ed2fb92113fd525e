"""Tensor values, the recording tape and reverse-mode backward."""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from selfstereo.errors import ShapeError, TapeError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_DTYPES = {32: np.float32, 64: np.float64}
_default_dtype: type = np.float32


@dataclass
class Node:
    op_name: str
    parents: Tuple["Tensor", ...]
    backward: BackwardFn


class Tape:
    """Append-only record of differentiable operations.

    Node inputs always refer to earlier nodes, so reverse index order is a
    valid topological order for backward.
    """

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self.epoch = 0

    def record(self, op_name: str, parents: Tuple["Tensor", ...], backward: BackwardFn) -> int:
        for parent in parents:
            if parent.node_id is not None and parent.epoch != self.epoch:
                raise TapeError(
                    f"{op_name}: input recorded in tape epoch {parent.epoch}, "
                    f"active epoch is {self.epoch}"
                )
        self.nodes.append(Node(op_name, parents, backward))
        return len(self.nodes) - 1

    def reset(self) -> None:
        self.nodes = []
        self.epoch += 1

    def __len__(self) -> int:
        return len(self.nodes)


class _ThreadState(threading.local):
    def __init__(self) -> None:
        self.tape = Tape()
        self.grad_enabled = True


_state = _ThreadState()


def get_tape() -> Tape:
    return _state.tape


def reset_tape() -> None:
    _state.tape.reset()


@contextmanager
def using_tape(tape: Tape) -> Iterator[Tape]:
    """Temporarily make ``tape`` the active tape of the current thread."""
    previous = _state.tape
    _state.tape = tape
    try:
        yield tape
    finally:
        _state.tape = previous


def grad_enabled() -> bool:
    return _state.grad_enabled


@contextmanager
def no_grad() -> Iterator[None]:
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def set_default_precision(bits: int) -> None:
    global _default_dtype
    if bits not in _DTYPES:
        raise ValueError(f"precision must be 32 or 64, got {bits}")
    _default_dtype = _DTYPES[bits]


def default_dtype() -> type:
    return _default_dtype


def precision_bits() -> int:
    return 64 if _default_dtype is np.float64 else 32


@contextmanager
def precision(bits: int) -> Iterator[None]:
    previous = precision_bits()
    set_default_precision(bits)
    try:
        yield
    finally:
        set_default_precision(previous)


class Tensor:
    """Dense array that optionally participates in the active tape."""

    __slots__ = ("values", "requires_grad", "grad", "node_id", "epoch", "name")

    def __init__(
        self,
        values: object,
        requires_grad: bool = False,
        *,
        dtype: Optional[type] = None,
        name: Optional[str] = None,
    ) -> None:
        self.values: np.ndarray = np.array(values, dtype=dtype or _default_dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self.epoch = 0
        self.name = name

    @classmethod
    def wrap(cls, values: np.ndarray) -> "Tensor":
        """Wrap an array without copying or casting it."""
        t = cls.__new__(cls)
        t.values = values if isinstance(values, np.ndarray) else np.asarray(values)
        t.requires_grad = False
        t.grad = None
        t.node_id = None
        t.epoch = 0
        t.name = None
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    @property
    def is_leaf(self) -> bool:
        return self.node_id is None

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.values

    def detach(self) -> "Tensor":
        return Tensor.wrap(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # Operators delegate to the differentiable op set.
    def __add__(self, other: object) -> "Tensor":
        return _ops.add(self, other)

    def __radd__(self, other: object) -> "Tensor":
        return _ops.add(other, self)

    def __sub__(self, other: object) -> "Tensor":
        return _ops.sub(self, other)

    def __rsub__(self, other: object) -> "Tensor":
        return _ops.sub(other, self)

    def __mul__(self, other: object) -> "Tensor":
        return _ops.mul(self, other)

    def __rmul__(self, other: object) -> "Tensor":
        return _ops.mul(other, self)

    def __truediv__(self, other: object) -> "Tensor":
        return _ops.div(self, other)

    def __rtruediv__(self, other: object) -> "Tensor":
        return _ops.div(other, self)

    def __neg__(self) -> "Tensor":
        return _ops.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return _ops.matmul(self, other)

    def __getitem__(self, index: object) -> "Tensor":
        return _ops.getitem(self, index)


def record(
    values: np.ndarray,
    parents: Sequence[Tensor],
    backward: BackwardFn,
    op_name: str,
) -> Tensor:
    """Wrap an op result and put it on the tape when any input needs a gradient."""
    out = Tensor.wrap(values)
    if _state.grad_enabled and any(p.requires_grad for p in parents):
        tape = _state.tape
        out.node_id = tape.record(op_name, tuple(parents), backward)
        out.epoch = tape.epoch
        out.requires_grad = True
    return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes broadcasting expanded to reach ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor, leaves: Optional[Sequence[Tensor]] = None) -> Dict[Tensor, np.ndarray]:
    """Reverse-mode sweep from a scalar loss.

    Every reachable leaf with ``requires_grad`` gets its ``grad`` overwritten.
    Leaves listed in ``leaves`` that the loss does not reach get a zero
    gradient. Returns the leaf-to-gradient map.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = _state.tape
    if loss.node_id is None or loss.epoch != tape.epoch:
        raise TapeError("loss is not recorded on the active tape")

    pending: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.values)}
    leaf_grads: Dict[int, Tuple[Tensor, np.ndarray]] = {}

    for idx in range(loss.node_id, -1, -1):
        grad = pending.pop(idx, None)
        if grad is None:
            continue
        node = tape.nodes[idx]
        for parent, parent_grad in zip(node.parents, node.backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent.node_id is not None:
                prev = pending.get(parent.node_id)
                pending[parent.node_id] = parent_grad if prev is None else prev + parent_grad
            else:
                key = id(parent)
                entry = leaf_grads.get(key)
                leaf_grads[key] = (
                    parent,
                    parent_grad if entry is None else entry[1] + parent_grad,
                )

    result: Dict[Tensor, np.ndarray] = {}
    for leaf, grad in leaf_grads.values():
        leaf.grad = np.array(grad, dtype=leaf.dtype).reshape(leaf.shape)
        result[leaf] = leaf.grad
    for leaf in leaves or ():
        if leaf.requires_grad and leaf not in result:
            leaf.grad = np.zeros_like(leaf.values)
            result[leaf] = leaf.grad
    return result


from selfstereo.autodiff import ops as _ops  # noqa: E402  (operator overloads)
