"""Parameter layout with a stable, version-stamped enumeration order."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np

from selfstereo.autodiff.tensor import Tensor, default_dtype
from selfstereo.model.config import PYRAMID_STRIDES, ModelConfig

# Bump whenever names, shapes or order in param_layout change.
PARAM_LAYOUT_VERSION = 1

FEATURE_PREFIXES: Tuple[str, ...] = ("fpn.", "vit.", "mla.", "fuse.")
AGGREGATION_PREFIX = "agg."


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: Tuple[int, ...]
    init: str  # he | small | zeros | ones


def _conv(specs: List[ParamSpec], name: str, c_out: int, c_in: int, k: int, dims: int = 2) -> None:
    specs.append(ParamSpec(f"{name}.weight", (c_out, c_in) + (k,) * dims, "he"))
    specs.append(ParamSpec(f"{name}.bias", (c_out,), "zeros"))


def _linear(specs: List[ParamSpec], name: str, d_in: int, d_out: int) -> None:
    specs.append(ParamSpec(f"{name}.weight", (d_in, d_out), "small"))
    specs.append(ParamSpec(f"{name}.bias", (d_out,), "zeros"))


def _norm(specs: List[ParamSpec], name: str, width: int) -> None:
    specs.append(ParamSpec(f"{name}.gamma", (width,), "ones"))
    specs.append(ParamSpec(f"{name}.beta", (width,), "zeros"))


def param_layout(cfg: ModelConfig) -> List[ParamSpec]:
    """Every parameter of ``cfg`` in enumeration order; disabled streams contribute nothing."""
    specs: List[ParamSpec] = []

    if cfg.uses_fpn:
        c_prev = cfg.in_channels
        for i, c in enumerate(cfg.encoder_channels, start=1):
            _conv(specs, f"fpn.enc{i}", c, c_prev, 3)
            c_prev = c
        for i, c in enumerate(cfg.encoder_channels, start=1):
            _conv(specs, f"fpn.lat{i}", cfg.fpn_width, c, 1)
        for stride in PYRAMID_STRIDES:
            _conv(specs, f"fpn.out{stride}", cfg.fpn_width, cfg.fpn_width, 3)

    d = cfg.vit_width
    if cfg.uses_vit:
        _linear(specs, "vit.patch", cfg.in_channels * cfg.patch * cfg.patch, d)
        specs.append(ParamSpec("vit.pos", (d,) + tuple(cfg.pos_grid), "small"))
        for b in range(cfg.vit_depth):
            _norm(specs, f"vit.block{b}.ln1", d)
            _linear(specs, f"vit.block{b}.qkv", d, 3 * d)
            _linear(specs, f"vit.block{b}.proj", d, d)
            _norm(specs, f"vit.block{b}.ln2", d)
            _linear(specs, f"vit.block{b}.fc1", d, d * cfg.vit_mlp_ratio)
            _linear(specs, f"vit.block{b}.fc2", d * cfg.vit_mlp_ratio, d)

    if cfg.uses_mla:
        for b in range(cfg.vit_depth):
            if b > 0 and cfg.mla_beta is None:
                specs.append(ParamSpec(f"mla.block{b}.beta", (1,), "ones"))
            _norm(specs, f"mla.block{b}.ln_self", d)
            _linear(specs, f"mla.block{b}.self_qkv", d, 3 * d)
            _linear(specs, f"mla.block{b}.self_proj", d, d)
            _norm(specs, f"mla.block{b}.ln_cross", d)
            _linear(specs, f"mla.block{b}.cross_q", d, d)
            _linear(specs, f"mla.block{b}.cross_kv", d, 2 * d)
            _linear(specs, f"mla.block{b}.cross_proj", d, d)

    for stride, channels in cfg.channels_by_stride().items():
        _conv(specs, f"fuse.lat{stride}", cfg.decoder_width, cfg.fusion_channels(), 1)
        _conv(specs, f"fuse.out{stride}", channels, cfg.decoder_width, 3)

    for stride in cfg.stage_strides():
        c_prev = cfg.volume_channels(stride)
        for i, c in enumerate(tuple(cfg.aggregation_channels) + (1,)):
            _conv(specs, f"agg.s{stride}.conv{i}", c, c_prev, 3, dims=3)
            c_prev = c
    return specs


def _initial_values(spec: ParamSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.init == "zeros":
        return np.zeros(spec.shape)
    if spec.init == "ones":
        return np.ones(spec.shape)
    if spec.init == "small":
        return rng.normal(0.0, 0.02, size=spec.shape)
    fan_in = int(np.prod(spec.shape[1:]))
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=spec.shape)


class ModelParams:
    """Ordered name -> Tensor map; iteration order is the layout order."""

    def __init__(self, tensors: Mapping[str, Tensor], version: int = PARAM_LAYOUT_VERSION) -> None:
        self._tensors: Dict[str, Tensor] = dict(tensors)
        self.version = version

    @classmethod
    def initialize(cls, cfg: ModelConfig, seed: int) -> "ModelParams":
        rng = np.random.default_rng(seed)
        tensors = {}
        for spec in param_layout(cfg):
            tensors[spec.name] = Tensor(_initial_values(spec, rng), requires_grad=True, name=spec.name)
        return cls(tensors)

    @classmethod
    def from_arrays(cls, cfg: ModelConfig, arrays: Mapping[str, np.ndarray]) -> "ModelParams":
        expected = param_layout(cfg)
        missing = [s.name for s in expected if s.name not in arrays]
        if missing:
            raise KeyError(f"parameter arrays missing {missing[:3]}")
        tensors = {}
        for spec in expected:
            values = np.asarray(arrays[spec.name])
            if values.shape != spec.shape:
                raise ValueError(f"{spec.name}: expected shape {spec.shape}, got {values.shape}")
            tensors[spec.name] = Tensor(values, requires_grad=True, name=spec.name)
        return cls(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: object) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> List[str]:
        return list(self._tensors)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def tensors(self) -> List[Tensor]:
        return list(self._tensors.values())

    def feature_names(self) -> List[str]:
        return [n for n in self._tensors if n.startswith(FEATURE_PREFIXES)]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.values for name, t in self._tensors.items()}

    def num_values(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()


def constant_view(arrays: Mapping[str, np.ndarray], base: ModelParams) -> Dict[str, Tensor]:
    """Parameter map where ``arrays`` replace matching entries as gradient-free constants."""
    view: Dict[str, Tensor] = {}
    for name, t in base.items():
        view[name] = Tensor.wrap(np.asarray(arrays[name], dtype=default_dtype())) if name in arrays else t
    return view
