"""Toy transformer stream and the multi-layer attention (MLA) stack.

The stem embeds 8x8 patches, runs a few pre-norm transformer blocks and taps
every block output. The MLA stack then walks the taps from shallow to deep;
each block sees its own tap plus ``beta`` times the previous block's output,
applies self-attention per view and cross-attention between the views. All
attention weights are shared by the two views.
"""
from __future__ import annotations

from typing import List, Mapping, Optional, Sequence, Tuple

from selfstereo.autodiff import nn, ops
from selfstereo.autodiff.tensor import Tensor
from selfstereo.errors import ShapeError

Params = Mapping[str, Tensor]


def linear(x: Tensor, params: Params, name: str) -> Tensor:
    return x @ params[f"{name}.weight"] + params[f"{name}.bias"]


def norm(x: Tensor, params: Params, name: str) -> Tensor:
    return nn.layer_norm(x, params[f"{name}.gamma"], params[f"{name}.beta"])


def _split_heads(x: Tensor, heads: int) -> Tensor:
    t, d = x.shape
    return ops.transpose(ops.reshape(x, (t, heads, d // heads)), (1, 0, 2))


def _merge_heads(x: Tensor) -> Tensor:
    heads, t, dh = x.shape
    return ops.reshape(ops.transpose(x, (1, 0, 2)), (t, heads * dh))


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    out = nn.scaled_dot_attention(_split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads))
    return _merge_heads(out)


def self_attention(x: Tensor, params: Params, qkv_name: str, heads: int) -> Tensor:
    d = x.shape[-1]
    qkv = linear(x, params, qkv_name)
    q, k, v = qkv[:, :d], qkv[:, d : 2 * d], qkv[:, 2 * d :]
    return multi_head_attention(q, k, v, heads)


def transformer_block(x: Tensor, params: Params, name: str, heads: int) -> Tensor:
    attended = self_attention(norm(x, params, f"{name}.ln1"), params, f"{name}.qkv", heads)
    x = x + linear(attended, params, f"{name}.proj")
    hidden = ops.leaky_relu(linear(norm(x, params, f"{name}.ln2"), params, f"{name}.fc1"))
    return x + linear(hidden, params, f"{name}.fc2")


def patch_embed(image: Tensor, params: Params, patch: int) -> Tuple[Tensor, Tuple[int, int]]:
    c, h, w = image.shape
    if h % patch or w % patch:
        raise ShapeError(f"toy_vit_forward: image size {h}x{w} must be divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    patches = ops.reshape(
        ops.transpose(ops.reshape(image, (c, gh, patch, gw, patch)), (1, 3, 0, 2, 4)),
        (gh * gw, c * patch * patch),
    )
    return linear(patches, params, "vit.patch"), (gh, gw)


def position_embedding(params: Params, grid: Tuple[int, int]) -> Tensor:
    pos = nn.bilinear_resize(params["vit.pos"], *grid)
    return ops.transpose(ops.reshape(pos, (pos.shape[0], grid[0] * grid[1])), (1, 0))


def encode_tokens(tokens: Tensor, params: Params, depth: int, heads: int) -> List[Tensor]:
    """Run the transformer blocks on ``[T,D]`` tokens, returning every block output."""
    taps = []
    x = tokens
    for b in range(depth):
        x = transformer_block(x, params, f"vit.block{b}", heads)
        taps.append(x)
    return taps


def toy_vit_forward(
    image: Tensor, params: Params, *, depth: int = 4, heads: int = 4, patch: int = 8
) -> Tuple[List[Tensor], Tuple[int, int]]:
    """Tapped ``[T,D]`` token sequences of every block and the token grid size."""
    tokens, grid = patch_embed(image, params, patch)
    return encode_tokens(tokens + position_embedding(params, grid), params, depth, heads), grid


def tokens_to_grid(tokens: Tensor, grid: Tuple[int, int]) -> Tensor:
    t, d = tokens.shape
    return ops.reshape(ops.transpose(tokens, (1, 0)), (d, grid[0], grid[1]))


def mla_block(left: Tensor, right: Tensor, params: Params, index: int, heads: int) -> Tuple[Tensor, Tensor]:
    """Self-attention per view, then cross-attention reading the other view."""
    name = f"mla.block{index}"
    d = left.shape[-1]

    def self_part(x: Tensor) -> Tensor:
        attended = self_attention(norm(x, params, f"{name}.ln_self"), params, f"{name}.self_qkv", heads)
        return x + linear(attended, params, f"{name}.self_proj")

    def cross_part(x: Tensor, other: Tensor) -> Tensor:
        q = linear(norm(x, params, f"{name}.ln_cross"), params, f"{name}.cross_q")
        kv = linear(norm(other, params, f"{name}.ln_cross"), params, f"{name}.cross_kv")
        attended = multi_head_attention(q, kv[:, :d], kv[:, d:], heads)
        return x + linear(attended, params, f"{name}.cross_proj")

    s_left, s_right = self_part(left), self_part(right)
    return cross_part(s_left, s_right), cross_part(s_right, s_left)


def mla_stack(
    left_layers: Sequence[Tensor],
    right_layers: Sequence[Tensor],
    params: Params,
    heads: int = 4,
    beta: Optional[float] = None,
) -> Tuple[Tensor, Tensor]:
    """Aggregate the tapped layers of both views; ``beta`` fixes the layer modulation when given."""
    if len(left_layers) != len(right_layers) or not left_layers:
        raise ShapeError(f"mla_stack: {len(left_layers)} left vs {len(right_layers)} right layers")
    for a, b in zip(left_layers, right_layers):
        if a.shape != b.shape:
            raise ShapeError(f"mla_stack: token shapes differ, {a.shape} vs {b.shape}")

    out_left = out_right = None
    for index, (layer_l, layer_r) in enumerate(zip(left_layers, right_layers)):
        if out_left is not None and out_right is not None:
            scale: Tensor | float = params[f"mla.block{index}.beta"] if beta is None else beta
            layer_l = layer_l + scale * out_left
            layer_r = layer_r + scale * out_right
        out_left, out_right = mla_block(layer_l, layer_r, params, index, heads)
    assert out_left is not None and out_right is not None
    return out_left, out_right
