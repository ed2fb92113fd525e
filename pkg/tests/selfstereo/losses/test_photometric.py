import numpy as np
import pytest

from selfstereo.autodiff import Tensor, grad_check, precision
from selfstereo.losses import photometric_loss, smoothness_loss


def _pair(seed, h=8, w=8, c=3):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=(c, h, w)), rng.uniform(size=(c, h, w))


def _brute_force(left, right, disp, alpha, exclude=None):
    c, h, w = left.shape
    warped = np.zeros_like(left)
    in_view = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            xs = x - disp[y, x]
            in_view[y, x] = 0 <= xs <= w - 1
            xc = min(max(xs, 0.0), w - 1.0)
            x0 = min(int(np.floor(xc)), w - 2)
            f = xc - x0
            warped[:, y, x] = (1 - f) * right[:, y, x0] + f * right[:, y, x0 + 1]

    pa = np.pad(left, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    pb = np.pad(warped, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    c1, c2 = 0.01**2, 0.03**2
    error = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            total = 0.0
            for ch in range(c):
                a, b = pa[ch, y : y + 3, x : x + 3], pb[ch, y : y + 3, x : x + 3]
                mu_a, mu_b = a.mean(), b.mean()
                var_a = (a * a).mean() - mu_a**2
                var_b = (b * b).mean() - mu_b**2
                cov = (a * b).mean() - mu_a * mu_b
                ssim = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
                total += alpha * (1 - ssim) / 2 + (1 - alpha) * abs(left[ch, y, x] - warped[ch, y, x])
            error[y, x] = total / c
    if exclude is not None:
        in_view &= ~exclude
    return error[in_view].mean()


class TestPhotometricLoss:
    def test_perfect_reconstruction_is_zero(self):
        left, _ = _pair(0)
        loss = photometric_loss(Tensor(left), Tensor(left), Tensor(np.zeros((8, 8))))
        assert loss.item() == pytest.approx(0.0, abs=1e-6)

    def test_matches_brute_force(self):
        with precision(64):
            left, right = _pair(1)
            disp = np.random.default_rng(2).uniform(0.1, 2.9, size=(8, 8))
            loss = photometric_loss(Tensor(left), Tensor(right), Tensor(disp))
        assert loss.item() == pytest.approx(_brute_force(left, right, disp, 0.85), rel=1e-9)

    def test_ssim_weight_changes_balance(self):
        with precision(64):
            left, right = _pair(3)
            disp = np.full((8, 8), 1.5)
            l1_only = photometric_loss(Tensor(left), Tensor(right), Tensor(disp), ssim_weight=0.0)
        assert l1_only.item() == pytest.approx(_brute_force(left, right, disp, 0.0), rel=1e-9)

    def test_excluded_pixels_are_ignored(self):
        with precision(64):
            left, right = _pair(4)
            disp = np.random.default_rng(11).uniform(0.1, 2.9, size=(8, 8))
            exclude = np.random.default_rng(12).uniform(size=(8, 8)) < 0.4
            loss = photometric_loss(Tensor(left), Tensor(right), Tensor(disp), exclude=exclude)
        assert loss.item() == pytest.approx(_brute_force(left, right, disp, 0.85, exclude), rel=1e-9)

    def test_everything_excluded_raises(self):
        left, right = _pair(5)
        with pytest.raises(ValueError):
            photometric_loss(Tensor(left), Tensor(right), Tensor(np.zeros((8, 8))), exclude=np.ones((8, 8), bool))

    def test_out_of_view_only_raises(self):
        left, right = _pair(6)
        with pytest.raises(ValueError):
            photometric_loss(Tensor(left), Tensor(right), Tensor(np.full((8, 8), 20.0)))

    def test_gradients(self):
        with precision(64):
            left, right = _pair(7)
            disp = np.random.default_rng(8).uniform(0.2, 1.8, size=(8, 8))
            wrt_disp = grad_check(lambda t: photometric_loss(Tensor(left), Tensor(right), t), disp)
            wrt_right = grad_check(lambda t: photometric_loss(Tensor(left), t, Tensor(disp)), right)
            wrt_left = grad_check(lambda t: photometric_loss(t, Tensor(right), Tensor(disp)), left)
        assert wrt_disp.passed(), wrt_disp
        assert wrt_right.passed(), wrt_right
        assert wrt_left.passed(), wrt_left


class TestSmoothnessLoss:
    def test_constant_disparity_is_zero(self):
        left, _ = _pair(0)
        assert smoothness_loss(Tensor(np.full((8, 8), 3.0)), Tensor(left)).item() == 0.0

    def test_ramp_on_flat_image(self):
        ramp = np.tile(np.arange(8.0), (8, 1))
        loss = smoothness_loss(Tensor(ramp), Tensor(np.full((3, 8, 8), 0.5)))
        assert loss.item() == pytest.approx(1.0)

    def test_edge_aware_weighting(self):
        step = np.zeros((8, 8))
        step[:, 4:] = 2.0
        edge = np.zeros((3, 8, 8))
        edge[:, :, 4:] = 1.0
        with_edge = smoothness_loss(Tensor(step), Tensor(edge)).item()
        flat = smoothness_loss(Tensor(step), Tensor(np.zeros((3, 8, 8)))).item()
        assert with_edge < flat

    def test_gradient(self):
        with precision(64):
            left, _ = _pair(9)
            report = grad_check(
                lambda t: smoothness_loss(t, Tensor(left)), np.random.default_rng(10).uniform(0, 4, (8, 8))
            )
        assert report.passed(), report

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(ValueError):
            smoothness_loss(Tensor(np.zeros((8, 8))), Tensor(np.zeros((3, 8, 6))))
