import numpy as np
import pytest

from selfstereo.autodiff import Tensor, grad_check, ops, precision
from selfstereo.errors import ShapeError
from selfstereo.model import (
    CostVolume,
    ProbabilityVolume,
    StereoNetwork,
    aggregate_cost,
    build_cost_volume,
    cascade_forward,
    regress_disparity,
    wta_disparity,
)


def _features(seed, c=8, h=4, w=16, unit=False):
    f = np.random.default_rng(seed).normal(size=(c, h, w))
    if unit:
        f /= np.linalg.norm(f, axis=0, keepdims=True)
    return f


def _shift_right_view(f, shift):
    # right-view pixel x shows the left-view content at x + shift
    g = np.zeros_like(f)
    g[:, :, : f.shape[2] - shift] = f[:, :, shift:]
    return g


def _agg_params(c_in, seed, zero=False):
    rng = np.random.default_rng(seed)
    shapes = {
        "agg.conv0.weight": (4, c_in, 3, 3, 3),
        "agg.conv0.bias": (4,),
        "agg.conv1.weight": (1, 4, 3, 3, 3),
        "agg.conv1.bias": (1,),
    }
    return {
        name: Tensor(np.zeros(shape) if zero else rng.normal(0.0, 0.3, size=shape)) for name, shape in shapes.items()
    }


class TestBuildCostVolume:
    def test_channel_layout(self):
        f = Tensor(_features(0))
        volume = build_cost_volume(f, f, 0, 6, groups=4)
        assert volume.values.shape == (2 * 8 + 4, 6, 4, 16)
        assert volume.depth == 6

    def test_self_correlation_at_zero(self):
        raw = _features(1)
        f = Tensor(raw)
        volume = build_cost_volume(f, f, 0, 4, groups=4).values.values
        expected = (raw**2).reshape(4, 2, 4, 16).mean(axis=1)
        np.testing.assert_allclose(volume[16:, 0], expected, rtol=1e-5)

    def test_detects_shift(self):
        raw = _features(2, c=16, unit=True)
        volume = build_cost_volume(Tensor(raw), Tensor(_shift_right_view(raw, 3)), 0, 8, groups=4)
        best = volume.values.values[32:].sum(axis=0).argmax(axis=0)
        assert (best[:, 3:] == 3).all()

    def test_out_of_range_is_zero(self):
        f = Tensor(_features(3))
        volume = build_cost_volume(f, f, 0, 5, groups=4).values.values
        assert not volume[:, 4, :, :4].any()

    def test_group_permutation_invariance(self):
        left, right = _features(4), _features(5)
        perm = np.array([1, 0, 2, 3, 5, 4, 7, 6])
        a = build_cost_volume(Tensor(left), Tensor(right), 0, 4, groups=4).values.values[16:]
        b = build_cost_volume(Tensor(left[perm]), Tensor(right[perm]), 0, 4, groups=4).values.values[16:]
        np.testing.assert_allclose(a, b, rtol=1e-5)

    def test_rejects_bad_groups_and_range(self):
        f = Tensor(_features(6))
        with pytest.raises(ShapeError):
            build_cost_volume(f, f, 0, 4, groups=3)
        with pytest.raises(ValueError):
            build_cost_volume(f, f, 0, 17, groups=4)
        with pytest.raises(ValueError):
            build_cost_volume(f, f, 2, 2, groups=4)


class TestAggregation:
    def _volume(self, seed, c=3, d=4, h=6, w=8):
        values = np.random.default_rng(seed).normal(size=(c, d, h, w))
        return CostVolume(Tensor(values), 0, d, 0, np.zeros((h, w), dtype=np.int64))

    def test_normalized(self):
        with precision(64):
            for seed in range(10):
                prob = aggregate_cost(self._volume(seed), _agg_params(3, seed), "agg")
                np.testing.assert_allclose(prob.values.values.sum(axis=0), 1.0, atol=1e-6)

    def test_zero_weights_are_uniform(self):
        prob = aggregate_cost(self._volume(0), _agg_params(3, 0, zero=True), "agg")
        np.testing.assert_allclose(prob.values.values, 0.25, atol=1e-7)

    def test_gradient_against_volume(self):
        with precision(64):
            params = _agg_params(3, 7)
            target = np.random.default_rng(8).normal(size=(6, 8))
            offsets = np.zeros((6, 8), dtype=np.int64)

            def fn(t):
                prob = aggregate_cost(CostVolume(t, 0, 4, 0, offsets), params, "agg")
                return ops.sum(regress_disparity(prob).values * Tensor(target))

            report = grad_check(fn, np.random.default_rng(9).normal(size=(3, 4, 6, 8)))
        assert report.passed(), report

    def test_rejects_stack_without_single_output(self):
        params = _agg_params(3, 0)
        del params["agg.conv1.weight"], params["agg.conv1.bias"]
        with pytest.raises(ShapeError):
            aggregate_cost(self._volume(0), params, "agg")


class TestRegression:
    def _prob(self, values, d_min=0):
        d, h, w = values.shape
        return ProbabilityVolume(Tensor(values), d_min, d_min + d, np.zeros((h, w), dtype=np.int64))

    def test_unit_mass(self):
        values = np.zeros((8, 2, 3))
        values[5] = 1.0
        np.testing.assert_allclose(regress_disparity(self._prob(values)).values.values, 5.0)

    def test_uniform_mean(self):
        np.testing.assert_allclose(regress_disparity(self._prob(np.full((4, 2, 2), 0.25))).values.values, 1.5)

    def test_matches_brute_force(self):
        raw = np.random.default_rng(0).uniform(size=(6, 3, 4))
        raw /= raw.sum(axis=0, keepdims=True)
        got = regress_disparity(self._prob(raw, d_min=2)).values.values
        for y in range(3):
            for x in range(4):
                expected = sum((2 + k) * raw[k, y, x] for k in range(6))
                assert got[y, x] == pytest.approx(expected, rel=1e-5)
                assert 2.0 - 1e-5 <= got[y, x] <= 7.0 + 1e-5

    def test_offsets_shift_candidates(self):
        values = np.zeros((4, 1, 2))
        values[1] = 1.0
        prob = ProbabilityVolume(Tensor(values), 0, 4, np.array([[0, 10]]))
        np.testing.assert_allclose(regress_disparity(prob).values.values, [[1.0, 11.0]])


class TestWinnerTakeAll:
    def test_identical_features_give_zero(self):
        f = _features(0, unit=True)
        assert not wta_disparity(f, f, 6).values.values.any()

    def test_detects_shift(self):
        f = _features(1, c=16, unit=True)
        got = wta_disparity(f, _shift_right_view(f, 4), 8).values.values
        assert (got[:, 4:] == 4).all()

    def test_range(self):
        got = wta_disparity(_features(2), _features(3), 5).values.values
        assert got.min() >= 0 and got.max() < 5


class TestCascade:
    def _images(self, seed, h=32, w=64):
        rng = np.random.default_rng(seed)
        return rng.uniform(size=(3, h, w)), rng.uniform(size=(3, h, w))

    def test_stage_shapes_and_ranges(self, small_config):
        network = StereoNetwork(small_config, seed=0)
        out = network.forward(*self._images(0))
        assert [m.stride for m in out.disparities] == [8, 4]
        assert out.disparities[0].values.shape == (4, 8)
        assert out.disparities[1].values.shape == (8, 16)
        for m in out.disparities:
            full = small_config.stage_range(m.stride)
            assert m.values.values.min() >= -1e-5
            assert m.values.values.max() <= full - 1 + 1e-5

    def test_single_stage_is_full_range(self, small_config):
        cfg = small_config.model_copy(update={"stages": 1})
        network = StereoNetwork(cfg, seed=0)
        left, right = self._images(1)
        features = network.extract_features(left, right)
        maps = cascade_forward(*features, network.params, cfg)
        assert len(maps) == 1 and maps[0].stride == 8

    def test_predict_is_deterministic_full_resolution(self, small_config):
        network = StereoNetwork(small_config, seed=4)
        left, right = self._images(2)
        a = network.predict(left, right)
        b = network.predict(left, right)
        assert a.shape == (32, 64)
        np.testing.assert_array_equal(a, b)

    def test_rejects_image_size(self, small_config):
        network = StereoNetwork(small_config, seed=0)
        with pytest.raises(ShapeError):
            network.predict(np.zeros((3, 30, 64)), np.zeros((3, 30, 64)))
