"""Elementwise, reduction and shape operations with analytic gradients."""
from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from selfstereo.autodiff.tensor import Tensor, default_dtype, record, unbroadcast
from selfstereo.errors import ShapeError

Axis = Union[int, Tuple[int, ...], None]

LEAKY_SLOPE = 0.1


def as_tensor(x: object, like: Optional[Tensor] = None) -> Tensor:
    """Constants adopt the dtype of the tensor they are combined with."""
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else default_dtype()
    return Tensor.wrap(np.asarray(x, dtype=dtype))


def _pair(a: object, b: object) -> Tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    return as_tensor(a, like), as_tensor(b, like)


def _expand(grad: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        axes = tuple(sorted(a % len(shape) for a in axes))
        for a in axes:
            grad = np.expand_dims(grad, a)
    return np.broadcast_to(grad, shape)


def add(a: object, b: object) -> Tensor:
    ta, tb = _pair(a, b)

    def backward(g: np.ndarray):
        return unbroadcast(g, ta.shape), unbroadcast(g, tb.shape)

    return record(ta.values + tb.values, (ta, tb), backward, "add")


def sub(a: object, b: object) -> Tensor:
    ta, tb = _pair(a, b)

    def backward(g: np.ndarray):
        return unbroadcast(g, ta.shape), unbroadcast(-g, tb.shape)

    return record(ta.values - tb.values, (ta, tb), backward, "sub")


def mul(a: object, b: object) -> Tensor:
    ta, tb = _pair(a, b)

    def backward(g: np.ndarray):
        ga = unbroadcast(g * tb.values, ta.shape) if ta.requires_grad else None
        gb = unbroadcast(g * ta.values, tb.shape) if tb.requires_grad else None
        return ga, gb

    return record(ta.values * tb.values, (ta, tb), backward, "mul")


def div(a: object, b: object) -> Tensor:
    ta, tb = _pair(a, b)
    out = ta.values / tb.values

    def backward(g: np.ndarray):
        ga = unbroadcast(g / tb.values, ta.shape) if ta.requires_grad else None
        gb = unbroadcast(-g * out / tb.values, tb.shape) if tb.requires_grad else None
        return ga, gb

    return record(out, (ta, tb), backward, "div")


def neg(a: Tensor) -> Tensor:
    return record(-a.values, (a,), lambda g: (-g,), "neg")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)
    return record(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return record(np.log(a.values), (a,), lambda g: (g / a.values,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.values)
    return record(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def square(a: Tensor) -> Tensor:
    return record(a.values * a.values, (a,), lambda g: (2.0 * g * a.values,), "square")


def abs(a: Tensor) -> Tensor:  # noqa: A001
    return record(np.abs(a.values), (a,), lambda g: (g * np.sign(a.values),), "abs")


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0
    return record(np.where(mask, a.values, 0), (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    scale = np.where(a.values > 0, 1.0, slope).astype(a.dtype)
    return record(a.values * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def sum(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(a.values.sum(axis=axis, keepdims=keepdims))

    def backward(g: np.ndarray):
        return (_expand(g, a.shape, axis, keepdims),)

    return record(out, (a,), backward, "sum")


def mean(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    out = np.asarray(a.values.mean(axis=axis, keepdims=keepdims))
    count = a.size // max(out.size, 1) if axis is not None else a.size

    def backward(g: np.ndarray):
        return (_expand(g / count, a.shape, axis, keepdims),)

    return record(out, (a,), backward, "mean")


def max_detached(a: Tensor, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
    """Plain array maximum; used as a constant shift, so it carries no gradient."""
    return a.values.max(axis=axis, keepdims=keepdims)


def l1(a: object, b: object) -> Tensor:
    """Mean absolute difference."""
    return mean(abs(sub(a, b)))


def smooth_l1(a: Tensor, beta: float = 1.0) -> Tensor:
    """Elementwise Huber-style penalty: quadratic below ``beta``, linear above."""
    x = a.values
    ax = np.abs(x)
    quadratic = ax < beta
    out = np.where(quadratic, 0.5 * x * x / beta, ax - 0.5 * beta)
    grad = np.where(quadratic, x / beta, np.sign(x))
    return record(out, (a,), lambda g: (g * grad,), "smooth_l1")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return record(a.values.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return record(a.values.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def flip(a: Tensor, axis: int) -> Tensor:
    out = np.ascontiguousarray(np.flip(a.values, axis))
    return record(out, (a,), lambda g: (np.flip(g, axis),), "flip")


def _is_basic_index(index: object) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(p is None or p is Ellipsis or isinstance(p, (int, slice)) for p in parts)


def getitem(a: Tensor, index: object) -> Tensor:
    out = np.array(a.values[index])
    basic = _is_basic_index(index)

    def backward(g: np.ndarray):
        grad = np.zeros_like(a.values)
        if basic:
            grad[index] = g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return record(out, (a,), backward, "slice")


def take(a: Tensor, indices: np.ndarray, axis: int = 0) -> Tensor:
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % a.ndim
    out = np.take(a.values, indices, axis=axis)

    def backward(g: np.ndarray):
        moved = np.moveaxis(np.zeros_like(a.values), axis, 0)
        g_moved = np.moveaxis(g, list(range(axis, axis + indices.ndim)), list(range(indices.ndim)))
        np.add.at(moved, indices, g_moved)
        return (np.moveaxis(moved, 0, axis),)

    return record(out, (a,), backward, "take")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    parts = tuple(tensors)
    out = np.concatenate([t.values for t in parts], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in parts])[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, splits, axis=axis))

    return record(out, parts, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(tensors)
    out = np.stack([t.values for t in parts], axis=axis)

    def backward(g: np.ndarray):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return record(out, parts, backward, "stack")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = np.matmul(a.values, b.values)

    def backward(g: np.ndarray):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(b.values, -1, -2)), a.shape)
        if b.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(a.values, -1, -2), g), b.shape)
        return ga, gb

    return record(out, (a, b), backward, "matmul")


def l2_normalize(a: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    norm = np.maximum(np.sqrt((a.values * a.values).sum(axis=axis, keepdims=True)), eps)
    out = a.values / norm

    def backward(g: np.ndarray):
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm,)

    return record(out, (a,), backward, "l2_normalize")


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    shift = a.values.max(axis=axis, keepdims=True)
    e = np.exp(a.values - shift)
    total = e.sum(axis=axis, keepdims=True)
    out = (shift + np.log(total)).squeeze(axis)
    soft = e / total

    def backward(g: np.ndarray):
        return (np.expand_dims(g, axis) * soft,)

    return record(out, (a,), backward, "logsumexp")


def weighted_sum(parts: Sequence[Tensor], weights: Sequence[float]) -> Tensor:
    total: Optional[Tensor] = None
    for part, weight in zip(parts, weights):
        term = mul(part, float(weight))
        total = term if total is None else add(total, term)
    if total is None:
        raise ShapeError("weighted_sum needs at least one part")
    return total
