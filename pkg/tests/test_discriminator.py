import numpy as np
import pytest

from cdinpaint.discriminator import Discriminator, spectral_normalize, spectral_normalize_backward
from cdinpaint.tensor_core import grad_check


def start_vector(n, seed=0):
    u = np.random.default_rng(seed).standard_normal(n)
    return u / np.linalg.norm(u)


class TestSpectralNorm:
    def test_identity_has_unit_sigma(self):
        w = np.eye(4)
        w_sn, _, _, sigma = spectral_normalize(w, start_vector(4), n_iter=5)
        assert sigma == pytest.approx(1.0)
        np.testing.assert_allclose(w_sn, w)

    def test_diagonal_converges_to_largest(self):
        w = np.diag([3.0, 1.0])
        _, _, _, sigma = spectral_normalize(w, start_vector(2), n_iter=20)
        assert abs(sigma - 3.0) / 3.0 < 0.01

    def test_warm_started_single_steps_converge(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal((8, 3, 3, 3))
        u = start_vector(8)
        for _ in range(30):
            w_sn, u, _, _ = spectral_normalize(w, u, n_iter=1)
        top = np.linalg.svd(w_sn.reshape(8, -1), compute_uv=False)[0]
        assert 0.99 <= top <= 1.01

    def test_zero_weight_unchanged(self):
        w = np.zeros((3, 2, 3, 3))
        w_sn, _, _, sigma = spectral_normalize(w, start_vector(3))
        assert sigma == 0.0
        np.testing.assert_array_equal(w_sn, w)
        assert np.all(np.isfinite(w_sn))

    def test_backward_matches_finite_differences(self):
        # with u and v held fixed, sigma is linear in W and the closed form is exact
        rng = np.random.default_rng(2)
        w = rng.standard_normal((4, 6))
        _, u, v, _ = spectral_normalize(w, start_vector(4), n_iter=200)

        def fwd(z):
            return z / float(u @ z @ v)

        def bwd(z, up):
            return spectral_normalize_backward(up, fwd(z), u, v, float(u @ z @ v))

        assert grad_check(fwd, bwd, w, 1e-6) < 1e-6


@pytest.fixture
def disc():
    d = Discriminator((4, 8, 8), dtype=np.float64)
    d.init_parameters(0)
    return d


class TestDiscriminator:
    def test_patch_map_shape(self, disc):
        out = disc.forward(np.zeros((2, 3, 32, 32)))
        assert out.shape == (2, 1, 4, 4)

    def test_default_channels(self):
        d = Discriminator()
        assert [p.out_channels for p in d.convs] == [64, 128, 256, 1]

    def test_sigmas_near_one_after_warmup(self, disc):
        x = np.random.default_rng(0).uniform(size=(1, 3, 32, 32))
        for _ in range(40):
            disc.forward(x)
        for p, u in zip(disc.convs, disc.u):
            w_sn, *_ = spectral_normalize(p.weight, u)
            top = np.linalg.svd(w_sn.reshape(p.out_channels, -1), compute_uv=False)[0]
            assert 0.99 <= top <= 1.01

    def test_state_dict_round_trip(self, disc):
        other = Discriminator((4, 8, 8), dtype=np.float64)
        other.load_state_dict({k: v.copy() for k, v in disc.state_dict().items()})
        x = np.random.default_rng(3).uniform(size=(1, 3, 16, 16))
        np.testing.assert_array_equal(disc.forward(x, False), other.forward(x, False))

    def test_state_dict_rejects_unknown(self, disc):
        state = disc.state_dict()
        state["disc.extra"] = np.zeros(1)
        with pytest.raises(KeyError):
            disc.load_state_dict(state)

    def test_backward_before_forward(self):
        with pytest.raises(RuntimeError):
            Discriminator((2, 2, 2)).backward(np.zeros((1, 1, 2, 2)))

    def test_input_gradient(self, disc):
        x = np.random.default_rng(4).uniform(size=(1, 3, 16, 16))

        def bwd(z, up):
            disc.forward(z, power_iteration=False)
            return disc.backward(up)

        assert grad_check(lambda z: disc.forward(z, power_iteration=False), bwd, x, 1e-5) < 1e-4

    def test_weight_gradient_through_normalization(self, disc):
        x = np.random.default_rng(5).uniform(size=(1, 3, 16, 16))
        p = disc.convs[1]
        for _ in range(5):
            disc.forward(x)
        orig = p.weight.copy()

        def fwd(w):
            p.weight[...] = w
            return disc.forward(x, power_iteration=False)

        def bwd(w, up):
            p.weight[...] = w
            disc.forward(x, power_iteration=False)
            disc.zero_grad()
            disc.backward(up)
            return disc.grads["disc.conv1.weight"].copy()

        err = grad_check(fwd, bwd, orig, 1e-6)
        p.weight[...] = orig
        assert err < 1e-3
