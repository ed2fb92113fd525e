"""Weighted combination of the four training objectives."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from selfstereo.autodiff import ops
from selfstereo.autodiff.tensor import Tensor
from selfstereo.losses.photometric import DEFAULT_SSIM_WEIGHT


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    photo: float = Field(1.0, ge=0.0)
    smooth: float = Field(10.0, ge=0.0)
    flc: float = Field(1.0, ge=0.0)
    ild: float = Field(1.0, ge=0.0)
    ssim_weight: float = Field(DEFAULT_SSIM_WEIGHT, ge=0.0, le=1.0)

    def as_dict(self) -> Dict[str, float]:
        return {"photo": self.photo, "smooth": self.smooth, "flc": self.flc, "ild": self.ild}


@dataclass
class LossParts:
    photo: Tensor
    smooth: Tensor
    flc: Optional[Tensor] = None
    ild: Optional[Tensor] = None

    def values(self) -> Dict[str, float]:
        return {name: (part.item() if part is not None else 0.0) for name, part in self.items()}

    def items(self):
        return (("photo", self.photo), ("smooth", self.smooth), ("flc", self.flc), ("ild", self.ild))


def total_loss(parts: LossParts, weights: LossWeights) -> Tensor:
    """``sum_i lambda_i * L_i``; absent parts count as zero."""
    lambdas = weights.as_dict()
    for name, value in lambdas.items():
        if value < 0:
            raise ValueError(f"loss weight {name} must be non-negative, got {value}")
    terms, factors = [], []
    for name, part in parts.items():
        if part is None:
            continue
        if part.size != 1:
            raise ValueError(f"total_loss: part {name} is not a scalar, shape {part.shape}")
        terms.append(ops.reshape(part, ()))
        factors.append(lambdas[name])
    return ops.weighted_sum(terms, factors)
