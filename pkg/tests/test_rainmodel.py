"""Physical imaging model: composition, inversion, blending, clamping."""

import numpy as np
import pytest

from ampe.errors import ConfigError, ShapeError
from ampe.rainmodel import (
    EPS_T,
    alpha_blend,
    clamp_transmission,
    clamp_transmission_grad_mask,
    compose,
    invert,
)


def _random_triple(rng, shape=(4, 4, 3), t_floor=EPS_T):
    b = rng.random(shape)
    t = t_floor + (1.0 - t_floor) * rng.random(shape)
    r = rng.random(shape) * 2.0 - 1.0
    return b, t, r


class TestCompose:
    def test_constant_case(self):
        b = np.full((32, 32, 3), 0.5)
        t = np.full((32, 32, 3), 0.8)
        r = np.full((32, 32, 3), 0.1)
        assert np.allclose(compose(b, t, r), 0.5)

    def test_identity_case(self):
        rng = np.random.default_rng(0)
        b = rng.random((4, 4, 3))
        assert np.array_equal(compose(b, np.ones_like(b), np.zeros_like(b)), b)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(1)
        b, t, r = _random_triple(rng)
        out = compose(b, t, r)
        for idx in np.ndindex(b.shape):
            assert out[idx] == pytest.approx(t[idx] * b[idx] + r[idx], abs=1e-15)

    def test_clamped_variant(self):
        b = np.full((2, 2, 3), 0.9)
        t = np.ones_like(b)
        r = np.full_like(b, 0.5)
        raw = compose(b, t, r)
        clamped = compose(b, t, r, clamp_output=True)
        assert raw.max() == pytest.approx(1.4)
        assert clamped.max() == 1.0

    def test_shape_mismatch_rejected(self):
        b = np.zeros((4, 4, 3))
        with pytest.raises(ShapeError):
            compose(b, np.ones((4, 5, 3)), np.zeros_like(b))


class TestInvert:
    def test_constant_case(self):
        i = np.full((2, 2, 3), 0.5)
        r = np.full_like(i, 0.1)
        t = np.full_like(i, 0.8)
        assert np.allclose(invert(i, r, t), 0.5)

    def test_degenerate_residual_model(self):
        rng = np.random.default_rng(2)
        i = rng.random((4, 4, 3))
        out = invert(i, np.zeros_like(i), np.ones_like(i))
        assert np.array_equal(out, i)

    def test_zero_transmission_uses_floor(self):
        i = np.full((2, 2, 3), 0.2)
        r = np.full_like(i, 0.1)
        t = np.zeros_like(i)
        out = invert(i, r, t, eps=0.05)
        assert np.allclose(out, 2.0)

    def test_always_finite(self):
        rng = np.random.default_rng(3)
        i = rng.random((4, 4, 3))
        r = rng.random((4, 4, 3)) * 2 - 1
        t = rng.random((4, 4, 3)) * 2 - 0.5  # includes negatives and zeros
        assert np.all(np.isfinite(invert(i, r, t)))

    def test_eps_must_be_positive(self):
        i = np.zeros((2, 2, 3))
        for bad in (0.0, -0.1):
            with pytest.raises(ConfigError):
                invert(i, i, i, eps=bad)

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            b, t, r = _random_triple(rng)
            i = compose(b, t, r)
            assert np.allclose(invert(i, r, t), b, atol=1e-6)


class TestAlphaBlend:
    def test_endpoints(self):
        rng = np.random.default_rng(5)
        x = rng.random((4, 4, 3))
        y = rng.random((4, 4, 3))
        assert np.array_equal(alpha_blend(x, y, 1.0), x)
        assert np.array_equal(alpha_blend(x, y, 0.0), y)

    def test_constant_case(self):
        x = np.ones((2, 2, 3))
        y = np.zeros_like(x)
        assert np.allclose(alpha_blend(x, y, 0.9), 0.9)

    def test_linear_in_alpha(self):
        rng = np.random.default_rng(6)
        x = rng.random((4, 4, 3))
        y = rng.random((4, 4, 3))
        mid = alpha_blend(x, y, 0.5)
        mean = 0.5 * (alpha_blend(x, y, 0.0) + alpha_blend(x, y, 1.0))
        assert np.allclose(mid, mean, atol=1e-12)

    def test_alpha_out_of_range_rejected(self):
        x = np.zeros((2, 2, 3))
        for bad in (-0.01, 1.01):
            with pytest.raises(ConfigError):
                alpha_blend(x, x, bad)


class TestClampTransmission:
    @pytest.mark.parametrize("value,expected", [(0.0, 0.05), (0.5, 0.5), (1.3, 1.0)])
    def test_pointwise_examples(self, value, expected):
        t = np.full((2, 2, 3), value)
        assert np.allclose(clamp_transmission(t, eps=0.05), expected)

    def test_range_invariant(self):
        rng = np.random.default_rng(7)
        t = rng.normal(size=(8, 8, 3))
        out = clamp_transmission(t, eps=0.05)
        assert out.min() >= 0.05 and out.max() <= 1.0

    def test_eps_validation(self):
        t = np.zeros((2, 2, 3))
        for bad in (0.0, 1.0, -0.2):
            with pytest.raises(ConfigError):
                clamp_transmission(t, eps=bad)

    def test_grad_mask_pass_through_inside_range(self):
        t = np.array([[[-0.1], [0.05]], [[0.5], [1.2]]])
        mask = clamp_transmission_grad_mask(t, eps=0.05)
        assert mask.tolist() == [[[0.0], [1.0]], [[1.0], [0.0]]]


class TestPointwiseness:
    def test_compose_invert_commute_with_permutation(self):
        rng = np.random.default_rng(8)
        b, t, r = _random_triple(rng, shape=(6, 5, 3))
        perm = rng.permutation(b.shape[0] * b.shape[1])

        def shuffle(a):
            flat = a.reshape(-1, 3)[perm]
            return flat.reshape(a.shape)

        assert np.array_equal(compose(shuffle(b), shuffle(t), shuffle(r)), shuffle(compose(b, t, r)))
        i = compose(b, t, r)
        assert np.array_equal(invert(shuffle(i), shuffle(r), shuffle(t)), shuffle(invert(i, r, t)))
