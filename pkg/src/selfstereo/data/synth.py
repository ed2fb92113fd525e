"""Layered synthetic stereograms with exact disparity and occlusion ground truth.

A scene is a textured background plus a few textured objects, each carrying a
planar disparity ``d(x, y) = a + b*x + c*y`` in left-image coordinates. Front
layers are nearer (larger disparity). The right view is rendered first: every
right pixel shows the front-most layer whose surface maps onto it. The left view
is then rendered by reprojection, each pixel sampling its own layer's texture at
``x - d`` with the same linear interpolation the warp uses, so every pixel whose
interpolation taps land on that same layer in the right view reconstructs
exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from selfstereo.autodiff.tensor import default_dtype

# Disparities are snapped to this grid so x - d is exact at 32-bit.
DISPARITY_QUANTUM = 1.0 / 256.0
MAX_SLOPE = 0.02


@dataclass
class StereoSample:
    left: np.ndarray
    right: np.ndarray
    gt_disparity: np.ndarray
    gt_occlusion: np.ndarray
    seed: int
    augmentation: Dict[str, float] = field(default_factory=dict)
    painted_mask: Optional[np.ndarray] = None

    @property
    def height(self) -> int:
        return int(self.left.shape[1])

    @property
    def width(self) -> int:
        return int(self.left.shape[2])

    def with_views(self, left: np.ndarray, right: np.ndarray, **changes: object) -> "StereoSample":
        return replace(self, left=left, right=right, **changes)


@dataclass
class _Layer:
    a: float
    b: float
    c: float
    shape: str = "background"
    cx: float = 0.0
    cy: float = 0.0
    rx: float = 1.0
    ry: float = 1.0

    def disparity(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return self.a + self.b * xs + self.c * ys

    def contains(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        if self.shape == "background":
            return np.ones(np.broadcast(xs, ys).shape, dtype=bool)
        u = (xs - self.cx) / self.rx
        v = (ys - self.cy) / self.ry
        if self.shape == "ellipse":
            return u * u + v * v <= 1.0
        return (np.abs(u) <= 1.0) & (np.abs(v) <= 1.0)

    def source_x(self, xr: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Left x whose reprojection lands on right column ``xr``."""
        return (xr + self.a + self.c * ys) / (1.0 - self.b)


def _smooth_texture(rng: np.random.Generator, channels: int, height: int, width: int) -> np.ndarray:
    base = rng.uniform(0.25, 0.75, size=(channels, 1, 1))
    noise = rng.uniform(-1.0, 1.0, size=(channels, height, width))
    kernel = np.array([0.25, 0.5, 0.25])
    padded = np.pad(noise, ((0, 0), (0, 0), (1, 1)), mode="edge")
    noise = sum(k * padded[:, :, i : i + width] for i, k in enumerate(kernel))
    padded = np.pad(noise, ((0, 0), (1, 1), (0, 0)), mode="edge")
    noise = sum(k * padded[:, i : i + height, :] for i, k in enumerate(kernel))
    texture = np.clip(base + 0.45 * noise, 0.0, 1.0)
    # Round through float32 so both precisions see the same texels.
    return texture.astype(np.float32).astype(np.float64)


def _plane(rng: np.random.Generator, centre: float, height: int, width: int, d_max: int) -> tuple:
    b, c = rng.uniform(-MAX_SLOPE, MAX_SLOPE, size=2)
    headroom = min(centre - 0.5, (d_max - 1.0) - centre)
    spread = abs(b) * width / 2 + abs(c) * height / 2
    if spread > headroom:
        scale = max(headroom, 0.0) / spread
        b, c = b * scale, c * scale
    a = centre - b * width / 2 - c * height / 2
    return float(a), float(b), float(c)


def _scene(rng: np.random.Generator, height: int, width: int, d_max: int) -> List[_Layer]:
    n_objects = int(rng.integers(2, 5))
    depth = np.sort(rng.uniform(0.0, 1.0, size=n_objects + 1))
    depth[0] *= 0.4
    span = d_max - 1.5
    layers = [_Layer(*_plane(rng, 0.5 + depth[0] * span, height, width, d_max))]
    for j in range(1, n_objects + 1):
        a, b, c = _plane(rng, 0.5 + depth[j] * span, height, width, d_max)
        layers.append(
            _Layer(
                a,
                b,
                c,
                shape="ellipse" if rng.uniform() < 0.5 else "rect",
                cx=float(rng.uniform(0.1, 0.9) * width),
                cy=float(rng.uniform(0.1, 0.9) * height),
                rx=float(rng.uniform(0.1, 0.25) * width),
                ry=float(rng.uniform(0.12, 0.35) * height),
            )
        )
    return layers


def _quantize(d: np.ndarray) -> np.ndarray:
    return np.round(d / DISPARITY_QUANTUM) * DISPARITY_QUANTUM


def generate_sample(seed: int, height: int, width: int, d_max: int, channels: int = 3) -> StereoSample:
    """Render one stereo pair; identical arguments give bit-identical output."""
    if height < 1 or width < 2:
        raise ValueError(f"image size must be at least 1x2, got {height}x{width}")
    if d_max < 2 or d_max >= width / 2:
        raise ValueError(f"d_max must lie in [2, width/2), got d_max={d_max} for width {width}")

    rng = np.random.default_rng(seed)
    layers = _scene(rng, height, width, d_max)
    margin = d_max + 2
    textures = [_smooth_texture(rng, channels, height, width + 2 * margin) for _ in layers]

    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]

    # Right view: front-most layer whose surface reprojects onto each column.
    right_front = np.zeros((height, width), dtype=np.int64)
    for j, layer in enumerate(layers[1:], start=1):
        right_front[layer.contains(layer.source_x(xs, ys), ys)] = j
    rows = np.arange(height)[:, None]
    cols = np.broadcast_to(np.arange(width)[None, :] + margin, (height, width))
    right = np.zeros((channels, height, width))
    for j, texture in enumerate(textures):
        sel = right_front == j
        right[:, sel] = texture[:, rows, cols][:, sel]

    # Left view: each pixel samples its own layer at x - d.
    left_front = np.zeros((height, width), dtype=np.int64)
    for j, layer in enumerate(layers[1:], start=1):
        left_front[layer.contains(xs, ys)] = j
    disparity = np.zeros((height, width))
    for j, layer in enumerate(layers):
        sel = left_front == j
        disparity[sel] = np.broadcast_to(_quantize(layer.disparity(xs, ys)), (height, width))[sel]

    sample_x = xs - disparity
    x0 = np.floor(sample_x).astype(np.int64)
    frac = sample_x - x0
    left = np.zeros((channels, height, width))
    for j, texture in enumerate(textures):
        sel = left_front == j
        v0 = texture[:, rows, x0 + margin]
        v1 = texture[:, rows, x0 + 1 + margin]
        left[:, sel] = ((1.0 - frac) * v0 + frac * v1)[:, sel]

    def visible(tap: np.ndarray, weight: np.ndarray) -> np.ndarray:
        inside = (tap >= 0) & (tap <= width - 1)
        same = np.zeros_like(inside)
        same[inside] = right_front[np.broadcast_to(rows, tap.shape)[inside], tap[inside]] == left_front[inside]
        return (weight == 0) | (inside & same)

    occlusion = (
        (sample_x >= 0)
        & (sample_x <= width - 1)
        & visible(x0, 1.0 - frac)
        & visible(x0 + 1, frac)
    )

    dtype = default_dtype()
    return StereoSample(
        left=left.astype(dtype),
        right=right.astype(dtype),
        gt_disparity=disparity.astype(dtype),
        gt_occlusion=occlusion,
        seed=int(seed),
    )
