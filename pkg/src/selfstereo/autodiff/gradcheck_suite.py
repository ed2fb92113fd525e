"""Finite-difference sweep over every differentiable op, kernel and loss.

Each case builds a scalar function of one tensor plus a start point; the sweep
runs it at 64-bit on up to three shapes and returns one report per run.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from selfstereo.autodiff import nn, ops
from selfstereo.autodiff.gradcheck import GradCheckReport, grad_check
from selfstereo.autodiff.tensor import Tensor, precision
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

Shape = Tuple[int, ...]
Builder = Callable[[np.random.Generator, Shape], Tuple[Callable[[Tensor], Tensor], np.ndarray]]

SUITE_EPS = 1e-6
SUITE_PROBES = 16
SUITE_TOLERANCE = 1e-5


@dataclass(frozen=True)
class GradCase:
    name: str
    build: Builder
    shapes: Sequence[Shape]


def _weighted(rng: np.random.Generator, fn: Callable[[Tensor], Tensor], shape: Shape) -> Callable[[Tensor], Tensor]:
    """Contract ``fn``'s output with fixed random weights so every output element matters."""
    out_shape = fn(Tensor(np.zeros(shape) + 0.5)).shape
    weights = Tensor(rng.uniform(-1.0, 1.0, size=out_shape))
    return lambda x: ops.sum(fn(x) * weights)


def _elementwise(fn: Callable[[Tensor], Tensor], low: float = -1.0, high: float = 1.0) -> Builder:
    def build(rng: np.random.Generator, shape: Shape):
        return _weighted(rng, fn, shape), rng.uniform(low, high, size=shape)

    return build


def _binary(fn: Callable[[Tensor, Tensor], Tensor]) -> Builder:
    def build(rng: np.random.Generator, shape: Shape):
        other = Tensor(rng.uniform(-1.0, 1.0, size=shape))
        return _weighted(rng, lambda x: fn(x, other) + fn(other, x), shape), rng.uniform(-1.0, 1.0, size=shape)

    return build


def _matmul(rng: np.random.Generator, shape: Shape):
    other = Tensor(rng.normal(size=shape[:-2] + (shape[-1], 3)))
    return _weighted(rng, lambda x: ops.matmul(x, other), shape), rng.normal(size=shape)


def _take(rng: np.random.Generator, shape: Shape):
    idx = rng.integers(0, shape[0], size=7)
    return _weighted(rng, lambda x: ops.take(x, idx, axis=0), shape), rng.normal(size=shape)


def _concat_stack(rng: np.random.Generator, shape: Shape):
    other = Tensor(rng.normal(size=shape))

    def fn(x: Tensor) -> Tensor:
        return ops.concat([ops.stack([x, other * x], axis=0), ops.stack([other, x], axis=0)], axis=-1)

    return _weighted(rng, fn, shape), rng.normal(size=shape)


def _weighted_sum(rng: np.random.Generator, shape: Shape):
    other = Tensor(rng.normal(size=shape))
    fn = lambda x: ops.weighted_sum([ops.sum(ops.square(x)), ops.sum(x * other)], [0.3, 1.7])  # noqa: E731
    return fn, rng.normal(size=shape)


def _conv2d(stride: int) -> Builder:
    def build(rng: np.random.Generator, shape: Shape):
        c, h, w = shape
        weight = Tensor(rng.normal(size=(3, c, 3, 3)) * 0.5)
        bias = Tensor(rng.normal(size=(3,)))
        return _weighted(rng, lambda x: nn.conv2d(x, weight, bias, stride=stride, pad=1), shape), rng.normal(size=shape)

    return build


def _conv2d_weight(rng: np.random.Generator, shape: Shape):
    image = Tensor(rng.normal(size=(shape[1], 6, 7)))
    return _weighted(rng, lambda w: nn.conv2d(image, w, None, pad=1), shape), rng.normal(size=shape)


def _conv3d(rng: np.random.Generator, shape: Shape):
    c = shape[0]
    weight = Tensor(rng.normal(size=(2, c, 3, 3, 3)) * 0.3)
    bias = Tensor(rng.normal(size=(2,)))
    return _weighted(rng, lambda x: nn.conv3d(x, weight, bias, pad=1), shape), rng.normal(size=shape)


def _warp_disparity(rng: np.random.Generator, shape: Shape):
    h, w = shape
    image = Tensor(rng.uniform(size=(2, h, w)))
    fn = lambda d: nn.warp_horizontal(image, d)[0]  # noqa: E731
    return _weighted(rng, fn, shape), rng.uniform(0.1, w / 3.0, size=shape)


def _warp_image(rng: np.random.Generator, shape: Shape):
    disparity = Tensor(rng.uniform(0.1, shape[-1] / 3.0, size=shape[1:]))
    fn = lambda x: nn.warp_horizontal(x, disparity)[0]  # noqa: E731
    return _weighted(rng, fn, shape), rng.uniform(size=shape)


def _gather(rng: np.random.Generator, shape: Shape):
    _, h, w = shape
    cols = rng.integers(-2, w + 2, size=(3, h, w))
    return _weighted(rng, lambda x: nn.gather_columns(x, cols)[0], shape), rng.normal(size=shape)


def _attention(rng: np.random.Generator, shape: Shape):
    k = Tensor(rng.normal(size=(shape[0] + 1, shape[1])))
    v = Tensor(rng.normal(size=(shape[0] + 1, shape[1])))
    return _weighted(rng, lambda q: nn.scaled_dot_attention(q, k, v), shape), rng.normal(size=shape)


def _layer_norm(rng: np.random.Generator, shape: Shape):
    gamma = Tensor(rng.uniform(0.5, 1.5, size=shape[-1:]))
    beta = Tensor(rng.normal(size=shape[-1:]))
    return _weighted(rng, lambda x: nn.layer_norm(x, gamma, beta), shape), rng.normal(size=shape)


def _ssim(rng: np.random.Generator, shape: Shape):
    other = Tensor(rng.uniform(size=shape))
    return _weighted(rng, lambda x: nn.ssim_map(x, other), shape), rng.uniform(size=shape)


def _cost_volume(rng: np.random.Generator, shape: Shape):
    from selfstereo.model.cost_volume import build_cost_volume

    right = Tensor(rng.normal(size=shape))
    fn = lambda x: build_cost_volume(x, right, 0, 3, 2).values  # noqa: E731
    return _weighted(rng, fn, shape), rng.normal(size=shape)


def _aggregate_regress(rng: np.random.Generator, shape: Shape):
    from selfstereo.model.cost_volume import CostVolume, aggregate_cost, regress_disparity

    c = shape[0]
    params = {
        "agg.conv0.weight": Tensor(rng.normal(size=(2, c, 3, 3, 3)) * 0.3),
        "agg.conv0.bias": Tensor(rng.normal(size=(2,)) * 0.1),
        "agg.conv1.weight": Tensor(rng.normal(size=(1, 2, 3, 3, 3)) * 0.3),
        "agg.conv1.bias": Tensor(np.zeros(1)),
    }

    def fn(x: Tensor) -> Tensor:
        volume = CostVolume(x, 0, shape[1], 0, np.zeros(shape[2:], dtype=np.int64))
        prob = aggregate_cost(volume, params, "agg")
        return regress_disparity(prob).values

    return _weighted(rng, fn, shape), rng.normal(size=shape)


def _photometric(rng: np.random.Generator, shape: Shape):
    from selfstereo.losses.photometric import photometric_loss

    h, w = shape
    left = Tensor(rng.uniform(size=(3, h, w)))
    right = Tensor(rng.uniform(size=(3, h, w)))
    return lambda d: photometric_loss(left, right, d), rng.uniform(0.2, 2.8, size=shape)


def _smoothness(rng: np.random.Generator, shape: Shape):
    from selfstereo.losses.photometric import smoothness_loss

    image = Tensor(rng.uniform(size=(3,) + shape))
    return lambda d: smoothness_loss(d, image), rng.uniform(0.0, 4.0, size=shape)


def _infonce(rng: np.random.Generator, shape: Shape):
    from selfstereo.losses.contrastive import infonce_loss

    n, dim = shape

    def unit(size):
        v = rng.normal(size=size)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    positives, negatives, queue = Tensor(unit((n, dim))), Tensor(unit((n, 5, dim))), unit((4, dim))
    fn = lambda x: infonce_loss(ops.l2_normalize(x, axis=-1), positives, negatives, queue, 0.5)  # noqa: E731
    return fn, rng.normal(size=shape)


def _disparity_diff(rng: np.random.Generator, shape: Shape):
    from selfstereo.losses.consistency import ValidMask, disparity_diff_loss

    target = rng.uniform(0.0, 4.0, size=shape)
    mask = ValidMask((rng.uniform(size=shape) > 0.3).astype(np.uint8), 3.0)
    return lambda d: disparity_diff_loss(d, target, mask), rng.uniform(0.0, 4.0, size=shape)


def _total(rng: np.random.Generator, shape: Shape):
    from selfstereo.losses.total import LossParts, LossWeights, total_loss

    other = Tensor(rng.normal(size=shape))

    def fn(x: Tensor) -> Tensor:
        parts = LossParts(ops.mean(ops.square(x)), ops.mean(ops.abs(x - other)), ops.sum(x * other), ops.mean(x))
        return total_loss(parts, LossWeights())

    return fn, rng.normal(size=shape)


SMALL: Sequence[Shape] = ((5,), (3, 4), (2, 3, 4))
IMAGE: Sequence[Shape] = ((1, 4, 4), (2, 4, 6), (3, 6, 6))
PLANE: Sequence[Shape] = ((4, 6), (5, 8), (6, 10))

CASES: List[GradCase] = [
    GradCase("add", _binary(ops.add), SMALL),
    GradCase("sub", _binary(ops.sub), SMALL),
    GradCase("mul", _binary(ops.mul), SMALL),
    GradCase("div", _binary(lambda a, b: ops.div(a, b * b + 0.5)), SMALL),
    GradCase("neg", _elementwise(ops.neg), SMALL),
    GradCase("exp", _elementwise(ops.exp), SMALL),
    GradCase("log", _elementwise(ops.log, 0.2, 2.0), SMALL),
    GradCase("sqrt", _elementwise(ops.sqrt, 0.2, 2.0), SMALL),
    GradCase("square", _elementwise(ops.square), SMALL),
    GradCase("abs", _elementwise(ops.abs, 0.1, 1.0), SMALL),
    GradCase("relu", _elementwise(ops.relu, 0.1, 1.0), SMALL),
    GradCase("leaky_relu", _elementwise(lambda x: ops.leaky_relu(-x), 0.1, 1.0), SMALL),
    GradCase("smooth_l1", _elementwise(lambda x: ops.smooth_l1(x * 2.0)), SMALL),
    GradCase("sum", _elementwise(lambda x: ops.sum(ops.square(x), axis=-1)), SMALL),
    GradCase("mean", _elementwise(lambda x: ops.mean(ops.square(x), axis=0, keepdims=True)), SMALL),
    GradCase("l1", _elementwise(lambda x: ops.l1(x, 0.05)), SMALL),
    GradCase("reshape", _elementwise(lambda x: ops.square(ops.reshape(x, (-1,)))), SMALL),
    GradCase("transpose", _elementwise(lambda x: ops.square(ops.transpose(x))), SMALL),
    GradCase("flip", _elementwise(lambda x: ops.square(ops.flip(x, axis=-1))), SMALL),
    GradCase("getitem", _elementwise(lambda x: ops.square(x[..., 1:])), ((5,), (3, 4), (2, 3, 4))),
    GradCase("take", _take, ((4,), (4, 3), (5, 2, 3))),
    GradCase("concat_stack", _concat_stack, SMALL),
    GradCase("matmul", _matmul, ((3, 4), (5, 2), (2, 3, 4))),
    GradCase("l2_normalize", _elementwise(lambda x: ops.l2_normalize(x, axis=-1)), SMALL),
    GradCase("logsumexp", _elementwise(lambda x: ops.logsumexp(x, axis=-1)), SMALL),
    GradCase("weighted_sum", _weighted_sum, SMALL),
    GradCase("softmax_axis", _elementwise(lambda x: nn.softmax_axis(x * 2.0, axis=0)), SMALL),
    GradCase("conv2d", _conv2d(1), IMAGE),
    GradCase("conv2d_stride2", _conv2d(2), ((1, 5, 5), (2, 5, 7), (3, 7, 9))),
    GradCase("conv2d_weight", _conv2d_weight, ((2, 1, 3, 3), (3, 2, 3, 3), (1, 3, 3, 3))),
    GradCase("conv3d", _conv3d, ((1, 3, 4, 4), (2, 2, 3, 5), (3, 3, 3, 3))),
    GradCase("avg_pool2d", _elementwise(lambda x: nn.avg_pool2d(x, 2)), ((1, 4, 4), (2, 4, 6), (3, 6, 8))),
    GradCase("bilinear_resize", _elementwise(lambda x: nn.bilinear_resize(x, 7, 5)), IMAGE),
    GradCase("pad2d_reflect", _elementwise(lambda x: nn.pad2d(x, 1, "reflect")), IMAGE),
    GradCase("pad2d_constant", _elementwise(lambda x: nn.pad2d(x, 2)), IMAGE),
    GradCase("box_mean", _elementwise(lambda x: nn.box_mean(x, 3)), IMAGE),
    GradCase("warp_horizontal_disparity", _warp_disparity, PLANE),
    GradCase("warp_horizontal_image", _warp_image, IMAGE),
    GradCase("gather_columns", _gather, IMAGE),
    GradCase("scaled_dot_attention", _attention, ((3, 4), (5, 2), (2, 6))),
    GradCase("layer_norm", _layer_norm, ((3, 5), (4, 4), (2, 8))),
    GradCase("ssim_map", _ssim, IMAGE),
    GradCase("build_cost_volume", _cost_volume, ((4, 3, 5), (2, 4, 6), (4, 2, 4))),
    GradCase("aggregate_regress", _aggregate_regress, ((2, 3, 3, 4), (3, 4, 2, 3), (1, 3, 4, 4))),
    GradCase("photometric_loss", _photometric, PLANE),
    GradCase("smoothness_loss", _smoothness, PLANE),
    GradCase("infonce_loss", _infonce, ((3, 4), (5, 3), (2, 8))),
    GradCase("disparity_diff_loss", _disparity_diff, PLANE),
    GradCase("total_loss", _total, SMALL),
]


def run_gradcheck_suite(
    seed: int = 0,
    cases: Sequence[GradCase] = CASES,
    eps: float = SUITE_EPS,
    probes: int = SUITE_PROBES,
) -> List[GradCheckReport]:
    """Run every case at 64-bit precision; one report per (case, shape)."""
    reports: List[GradCheckReport] = []
    with precision(64):
        for index, case in enumerate(cases):
            for variant, shape in enumerate(case.shapes):
                rng = np.random.default_rng(np.random.SeedSequence((seed, index, variant)))
                fn, point = case.build(rng, tuple(shape))
                label = f"{case.name}{list(shape)}"
                report = grad_check(fn, point, eps=eps, probes=probes, seed=seed, op_name=label)
                logger.debug("%s: max rel err %.2e", label, report.max_rel_error)
                reports.append(report)
    failed = [r for r in reports if not r.passed(SUITE_TOLERANCE)]
    if failed:
        logger.warning("%d of %d gradient checks failed", len(failed), len(reports))
    return reports
