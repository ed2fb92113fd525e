import pytest

from selfstereo.model.config import ModelConfig


@pytest.fixture
def small_config() -> ModelConfig:
    return ModelConfig(
        d_max=16,
        encoder_channels=(4, 4, 8, 8),
        fpn_width=8,
        decoder_width=8,
        feature_channels=(8, 8, 8),
        groups=4,
        vit_width=16,
        vit_heads=2,
        vit_depth=2,
        aggregation_channels=(4,),
        stages=2,
        cascade_radius=2,
    )
