"""Exponential moving average of the feature extractor (the key encoder)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from selfstereo.autodiff.tensor import Tensor
from selfstereo.errors import ShapeError
from selfstereo.model.params import ModelParams

DEFAULT_MOMENTUM = 0.999


@dataclass
class MomentumState:
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    momentum: float = DEFAULT_MOMENTUM

    def __post_init__(self) -> None:
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")

    @classmethod
    def from_params(cls, params: ModelParams, momentum: float = DEFAULT_MOMENTUM) -> "MomentumState":
        """Key encoder starting as an exact copy of the feature extractor."""
        return cls({name: params[name].values.copy() for name in params.feature_names()}, momentum)


def momentum_update(state: MomentumState, theta: Mapping[str, Tensor | np.ndarray]) -> MomentumState:
    """``xi <- m * xi + (1 - m) * theta`` for every key parameter, in place."""
    m = state.momentum
    for name, xi in state.params.items():
        if name not in theta:
            raise KeyError(f"momentum_update: no query parameter named {name}")
        source = theta[name]
        values = source.values if isinstance(source, Tensor) else np.asarray(source)
        if values.shape != xi.shape:
            raise ShapeError(f"momentum_update: {name} has shape {values.shape}, key copy has {xi.shape}")
        xi *= m
        xi += (1.0 - m) * values
    return state
