import numpy as np
import pytest
from pydantic import ValidationError

from selfstereo.data.augment import AugmentationConfig, apply_augmentation, curriculum_ratio
from selfstereo.data.synth import generate_sample


@pytest.fixture(scope="module")
def sample():
    return generate_sample(21, 64, 128, 16)


def test_identity_config_reproduces_input(sample):
    out = apply_augmentation(sample, AugmentationConfig.identity(), rng_seed=3)
    np.testing.assert_array_equal(out.left, sample.left)
    np.testing.assert_array_equal(out.right, sample.right)
    assert out.augmentation["occluded_fraction"] == 0.0


def test_brightness_scales_right_mean_only(sample):
    cfg = AugmentationConfig.identity().model_copy(update={"brightness_range": (0.5, 0.5)})
    out = apply_augmentation(sample, cfg, rng_seed=4)
    assert out.right.mean() == pytest.approx(0.5 * sample.right.mean(), rel=1e-5)
    np.testing.assert_array_equal(out.left, sample.left)


def test_symmetric_mode_touches_both_views(sample):
    cfg = AugmentationConfig.identity().model_copy(update={"brightness_range": (0.5, 0.5), "asymmetric": False})
    out = apply_augmentation(sample, cfg, rng_seed=4)
    assert out.left.mean() == pytest.approx(0.5 * sample.left.mean(), rel=1e-5)


def test_occlusion_fraction_within_one_patch(sample):
    cfg = AugmentationConfig.identity().model_copy(update={"occlusion_ratio": 0.15, "occlusion_patch": 8})
    out = apply_augmentation(sample, cfg, rng_seed=5)
    fraction = out.painted_mask.mean()
    slack = 8 * 8 / (64 * 128)
    assert 0.15 - slack <= fraction <= 0.15 + slack
    np.testing.assert_array_equal(out.right, sample.right)
    changed = np.any(out.left != sample.left, axis=0)
    assert not changed[~out.painted_mask].any()


def test_ground_truth_is_never_altered(sample):
    out = apply_augmentation(sample, AugmentationConfig(occlusion_ratio=0.2), rng_seed=6)
    np.testing.assert_array_equal(out.gt_disparity, sample.gt_disparity)
    np.testing.assert_array_equal(out.gt_occlusion, sample.gt_occlusion)
    assert 0.0 <= out.left.min() and out.left.max() <= 1.0
    assert 0.0 <= out.right.min() and out.right.max() <= 1.0


def test_augmentation_is_deterministic(sample):
    cfg = AugmentationConfig(occlusion_ratio=0.1)
    a = apply_augmentation(sample, cfg, rng_seed=9)
    b = apply_augmentation(sample, cfg, rng_seed=9)
    np.testing.assert_array_equal(a.left, b.left)
    np.testing.assert_array_equal(a.right, b.right)


def test_config_rejects_bad_values():
    with pytest.raises(ValidationError):
        AugmentationConfig(occlusion_ratio=0.3)
    with pytest.raises(ValidationError):
        AugmentationConfig(brightness_range=(1.4, 0.6))
    with pytest.raises(ValidationError):
        AugmentationConfig(gamma_range=(0.0, 1.0))


class TestCurriculumRatio:
    def test_starts_at_zero(self):
        assert curriculum_ratio(0, 100) == 0.0

    def test_reaches_peak_at_end(self):
        assert curriculum_ratio(100, 100) == 0.15

    def test_quarter_is_half_peak(self):
        assert curriculum_ratio(25, 100) == pytest.approx(0.075)

    def test_flat_after_midpoint(self):
        assert curriculum_ratio(50, 100) == curriculum_ratio(80, 100) == pytest.approx(0.15)

    def test_rejects_zero_total(self):
        with pytest.raises(ValueError):
            curriculum_ratio(0, 0)

    def test_rejects_step_past_total(self):
        with pytest.raises(ValueError):
            curriculum_ratio(101, 100)
