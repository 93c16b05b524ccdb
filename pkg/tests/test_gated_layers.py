import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdinpaint.gated_layers import GatedConvLayer, PartialConvLayer, gated_forward, partial_forward
from cdinpaint.gradcheck import check_gated
from cdinpaint.tensor_core import ConvParams, conv2d_forward, leaky_relu


def conv(rng, out_c, in_c, k=3, stride=1):
    return ConvParams(rng.standard_normal((out_c, in_c, k, k)), rng.standard_normal(out_c), stride, k // 2)


class TestGated:
    def test_saturated_gate_passes_features(self):
        rng = np.random.default_rng(0)
        img_conv = conv(rng, 3, 2)
        mask_conv = ConvParams(np.zeros((3, 1, 3, 3)), np.full(3, 20.0), 1, 1)
        layer = GatedConvLayer(img_conv, mask_conv)
        x = rng.standard_normal((1, 2, 6, 6))
        out, gate = gated_forward(x, np.ones((1, 1, 6, 6)), layer)
        np.testing.assert_allclose(gate, 1, atol=1e-8)
        np.testing.assert_allclose(out, leaky_relu(conv2d_forward(x, img_conv)), rtol=1e-8)

    def test_zero_mask_gives_half_gate(self):
        rng = np.random.default_rng(1)
        mask_conv = conv(rng, 3, 1)
        mask_conv.bias[...] = 0
        layer = GatedConvLayer(conv(rng, 3, 2), mask_conv)
        _, gate = layer.forward(rng.standard_normal((1, 2, 5, 5)), np.zeros((1, 1, 5, 5)))
        np.testing.assert_array_equal(gate, 0.5)

    def test_identity_gate_is_literal_product(self):
        rng = np.random.default_rng(2)
        ic, mc = conv(rng, 4, 2), conv(rng, 4, 1)
        layer = GatedConvLayer(ic, mc, activation="identity", gate="identity")
        x = rng.standard_normal((1, 2, 6, 6))
        m = rng.uniform(0, 1, (1, 1, 6, 6))
        out, _ = layer.forward(x, m)
        np.testing.assert_allclose(out, conv2d_forward(x, ic) * conv2d_forward(m, mc))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 100_000), scale=st.floats(0.1, 3))
    def test_sigmoid_gate_strictly_inside_unit_interval(self, seed, scale):
        # float64 sigmoid rounds to exactly 1.0 past ~37, so keep pre-activations moderate
        rng = np.random.default_rng(seed)
        layer = GatedConvLayer(conv(rng, 2, 1), conv(rng, 2, 1))
        layer.mask_conv.weight[...] *= scale
        _, gate = layer.forward(rng.standard_normal((1, 1, 5, 5)), rng.uniform(0, 1, (1, 1, 5, 5)))
        assert np.all(gate > 0) and np.all(gate < 1)

    def test_spatial_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        layer = GatedConvLayer(conv(rng, 2, 1), conv(rng, 2, 1))
        with pytest.raises(ValueError, match="spatial"):
            layer.forward(np.zeros((1, 1, 5, 5)), np.zeros((1, 1, 4, 5)))

    def test_mismatched_convs_rejected(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            GatedConvLayer(conv(rng, 2, 1), conv(rng, 3, 1))
        with pytest.raises(ValueError):
            GatedConvLayer(conv(rng, 2, 1, stride=2), conv(rng, 2, 1))

    def test_output_shapes_agree(self):
        rng = np.random.default_rng(5)
        layer = GatedConvLayer(conv(rng, 4, 3, 5, 2), conv(rng, 4, 1, 5, 2))
        out, gate = layer.forward(np.zeros((1, 3, 16, 16)), np.ones((1, 1, 16, 16)))
        assert out.shape == gate.shape == (1, 4, 8, 8)

    @pytest.mark.parametrize("seed", range(5))
    def test_full_backward_finite_differences(self, seed):
        assert check_gated(seed) < 1e-3


def single_pixel_mask(h, w, r, c):
    m = np.zeros((1, 1, h, w))
    m[0, 0, r, c] = 1
    return m


class TestPartial:
    def layer(self, k=3, in_c=2, out_c=3, seed=0):
        rng = np.random.default_rng(seed)
        return PartialConvLayer(conv(rng, out_c, in_c, k))

    def test_all_ones_mask(self):
        layer = self.layer()
        x = np.random.default_rng(1).standard_normal((1, 2, 6, 6))
        out, m = partial_forward(x, np.ones((1, 1, 6, 6)), layer)
        np.testing.assert_array_equal(m, 1)
        np.testing.assert_allclose(out, conv2d_forward(x, layer.image_conv))

    def test_all_zeros_mask(self):
        layer = self.layer()
        x = np.random.default_rng(1).standard_normal((1, 2, 6, 6))
        out, m = layer.forward(x, np.zeros((1, 1, 6, 6)))
        assert not out.any() and not m.any()

    def test_single_valid_pixel_neighbourhood(self):
        layer = self.layer()
        mask = single_pixel_mask(7, 7, 3, 4)
        _, m = layer.forward(np.zeros((1, 2, 7, 7)), mask)
        # enumerate windows: position p sees the pixel iff |p - (3,4)| <= 1 in both axes
        expected = np.zeros((7, 7))
        for r in range(7):
            for c in range(7):
                if abs(r - 3) <= 1 and abs(c - 4) <= 1:
                    expected[r, c] = 1
        np.testing.assert_array_equal(m[0, 0], expected)

    def test_non_binary_mask_rejected(self):
        with pytest.raises(ValueError, match="binary"):
            self.layer().forward(np.zeros((1, 2, 4, 4)), np.full((1, 1, 4, 4), 0.5))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 100_000), k=st.sampled_from([3, 5]))
    def test_hole_never_grows_and_stays_binary(self, seed, k):
        rng = np.random.default_rng(seed)
        layer = self.layer(k=k, in_c=1, out_c=1)
        mask = (rng.uniform(size=(1, 1, 9, 9)) > 0.6).astype(float)
        _, out = layer.forward(np.zeros((1, 1, 9, 9)), mask)
        assert set(np.unique(out)) <= {0.0, 1.0}
        assert np.all(out[mask == 1] == 1)

    @pytest.mark.parametrize("k", [3, 5, 7])
    def test_rect_hole_shrinks_by_half_kernel(self, k):
        layer = self.layer(k=k, in_c=1, out_c=1)
        mask = np.ones((1, 1, 40, 40))
        r0, r1, c0, c1 = 8, 30, 5, 33
        mask[..., r0:r1, c0:c1] = 0
        shrink = k // 2
        x = np.zeros((1, 1, 40, 40))
        while not mask.all():
            _, mask = layer.forward(x, mask)
            r0, r1, c0, c1 = r0 + shrink, r1 - shrink, c0 + shrink, c1 - shrink
            expected = np.ones((40, 40))
            if r0 < r1 and c0 < c1:
                expected[r0:r1, c0:c1] = 0
            np.testing.assert_array_equal(mask[0, 0], expected)
