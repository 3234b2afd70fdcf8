import pytest
import torch

from stainedit.networks import (
    Discriminator,
    Generator,
    NetConfig,
    build_discriminators,
    build_generators,
    saliency_map,
)

TINY = NetConfig(base_channels=4, n_down=2, n_res=1, image_px=32, d_base_channels=8)


@pytest.fixture(scope="module")
def tiny_gen():
    torch.manual_seed(0)
    return Generator(TINY, "he2p63")


@pytest.fixture(scope="module")
def tiny_disc():
    torch.manual_seed(1)
    return Discriminator(TINY)


def rand_image(cfg=TINY, batch=1, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(batch, 3, cfg.image_px, cfg.image_px, generator=g)


class TestShapes:
    def test_default_config_feature_shape(self):
        torch.manual_seed(0)
        gen = Generator(NetConfig(), "he2p63")
        f = gen.encode(torch.rand(1, 3, 256, 256))
        assert f.shape == (1, 128, 64, 64)

    def test_decode_shape_and_bounds(self, tiny_gen):
        g = torch.Generator().manual_seed(3)
        f = torch.randn(2, TINY.latent_channels, 8, 8, generator=g)
        out = tiny_gen.decode(f)
        assert out.shape == (2, 3, 32, 32)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_shape_errors(self, tiny_gen):
        with pytest.raises(ValueError):
            tiny_gen.encode(torch.rand(1, 4, 32, 32))
        with pytest.raises(ValueError):
            tiny_gen.encode(torch.rand(1, 3, 16, 16))
        with pytest.raises(ValueError):
            tiny_gen.mixer(torch.rand(1, TINY.latent_channels + 1, 8, 8))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NetConfig(image_px=250)  # not divisible by 2**n_down
        with pytest.raises(ValueError):
            NetConfig(base_channels=0)

    def test_latent_default_follows_downsampling(self):
        assert NetConfig().latent_channels == 32 * 4
        assert NetConfig(base_channels=8, n_down=3).latent_channels == 64
        assert NetConfig(latent_channels=20).latent_channels == 20

    @pytest.mark.parametrize("px,n_down", [(64, 1), (64, 3), (128, 2)])
    def test_shape_arithmetic_across_configs(self, px, n_down):
        torch.manual_seed(0)
        cfg = NetConfig(base_channels=4, n_down=n_down, n_res=1, image_px=px, d_base_channels=8)
        gen = Generator(cfg, "he2p63")
        out, f_pre, f_post = gen.generate(torch.rand(1, 3, px, px))
        assert f_pre.shape == (1, cfg.latent_channels, cfg.feature_px, cfg.feature_px)
        assert f_post.shape == f_pre.shape
        assert out.shape == (1, 3, px, px)


class TestEncode:
    def test_deterministic(self, tiny_gen):
        img = rand_image()
        assert torch.equal(tiny_gen.encode(img), tiny_gen.encode(img))

    def test_mask_channel_reaches_encoder(self, tiny_gen):
        img = rand_image()
        ones = torch.ones(1, 1, 32, 32)
        zeros = torch.zeros(1, 1, 32, 32)
        assert not torch.equal(tiny_gen.encode(img, ones), tiny_gen.encode(img, zeros))

    def test_default_mask_is_all_ones(self, tiny_gen):
        img = rand_image()
        assert torch.equal(tiny_gen.encode(img), tiny_gen.encode(img, torch.ones(1, 1, 32, 32)))

    def test_low_res_mask_upsampled(self, tiny_gen):
        img = rand_image()
        coarse = torch.ones(1, 1, 8, 8)
        assert torch.equal(tiny_gen.encode(img, coarse), tiny_gen.encode(img))


class TestBottleneck:
    def test_identity_weight_passthrough(self):
        torch.manual_seed(0)
        gen = Generator(TINY, "he2p63")
        with torch.no_grad():
            gen.mixer.weight.copy_(torch.eye(TINY.latent_channels))
            gen.mixer.bias.zero_()
        f = torch.randn(1, TINY.latent_channels, 4, 4)
        assert torch.allclose(gen.mixer(f), f, atol=1e-6)

    def test_override_equal_to_weight_is_identical(self, tiny_gen):
        f = torch.randn(1, TINY.latent_channels, 4, 4, generator=torch.Generator().manual_seed(5))
        base = tiny_gen.mixer(f)
        overridden = tiny_gen.mixer(f, w_override=tiny_gen.mixer.weight.detach().clone())
        assert torch.equal(base, overridden)

    def test_override_delta_is_exact_matrix_product(self):
        # 4-channel map on a 2x2 grid: the per-pixel delta must equal dW @ f.
        torch.manual_seed(2)
        gen = Generator(NetConfig(base_channels=1, n_down=2, n_res=1, image_px=8, d_base_channels=4), "he2p63")
        c = gen.cfg.latent_channels
        f = torch.arange(c * 4, dtype=torch.float32).reshape(1, c, 2, 2) / 8.0
        dw = torch.ones(c, c) / 4.0
        w = gen.mixer.weight.detach()
        delta = gen.mixer(f, w_override=w + dw) - gen.mixer(f, w_override=w)
        expected = torch.einsum("ij,bjhw->bihw", dw, f)
        assert torch.allclose(delta, expected, atol=1e-6)

    def test_override_linearity_in_alpha(self, tiny_gen):
        g = torch.Generator().manual_seed(9)
        c = TINY.latent_channels
        f = torch.randn(1, c, 4, 4, generator=g)
        d = torch.randn(c, c, generator=g)
        w = tiny_gen.mixer.weight.detach()
        for alpha in (0.5, 2.0, -3.0):
            delta = tiny_gen.mixer(f, w_override=w + alpha * d) - tiny_gen.mixer(f, w_override=w)
            expected = alpha * torch.einsum("ij,bjhw->bihw", d, f)
            assert torch.allclose(delta, expected, atol=1e-5)

    def test_bad_override_shape(self, tiny_gen):
        f = torch.randn(1, TINY.latent_channels, 4, 4)
        with pytest.raises(ValueError):
            tiny_gen.mixer(f, w_override=torch.eye(TINY.latent_channels + 1))


class TestGenerate:
    def test_composition_law(self, tiny_gen):
        img = rand_image(seed=11)
        out, f_pre, f_post = tiny_gen.generate(img)
        assert torch.equal(f_post, tiny_gen.mixer(f_pre))
        assert torch.equal(out, tiny_gen.decode(f_post))
        assert torch.equal(f_pre, tiny_gen.encode(img))

    def test_no_override_equals_explicit_weight(self, tiny_gen):
        img = rand_image(seed=12)
        plain = tiny_gen.generate(img)[0]
        explicit = tiny_gen.generate(img, w_override=tiny_gen.mixer.weight.detach().clone())[0]
        assert torch.equal(plain, explicit)

    def test_outputs_finite_over_seeds(self):
        for seed in range(10):
            torch.manual_seed(seed)
            gen = Generator(TINY, "p632he")
            out = gen.generate(rand_image(seed=seed))[0]
            assert torch.isfinite(out).all()
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_bad_direction_rejected(self):
        with pytest.raises(ValueError):
            Generator(TINY, "sideways")


class TestDiscriminator:
    def test_grid_shape_fixed(self, tiny_disc):
        s1 = tiny_disc(rand_image(seed=1))
        s2 = tiny_disc(rand_image(seed=2))
        assert s1.shape == s2.shape
        assert s1.shape[0] == 1 and s1.shape[1] == 1
        assert s1.shape[2] == s1.shape[3]

    def test_default_config_grid_is_30x30(self):
        torch.manual_seed(0)
        d = Discriminator(NetConfig())
        assert d(torch.rand(1, 3, 256, 256)).shape == (1, 1, 30, 30)

    def test_deterministic_and_input_sensitive(self, tiny_disc):
        img = rand_image(seed=3)
        assert torch.equal(tiny_disc(img), tiny_disc(img))
        assert not torch.equal(tiny_disc(img), tiny_disc(rand_image(seed=4)))


class TestSaliency:
    def test_normalized_and_nonnegative(self, tiny_disc):
        sal = saliency_map(tiny_disc, rand_image(seed=5))
        assert sal.min() >= 0.0
        assert sal.max() == pytest.approx(1.0, abs=1e-6)
        assert sal.shape == (1, 3, 32, 32)

    def test_per_sample_normalization(self, tiny_disc):
        sal = saliency_map(tiny_disc, rand_image(batch=3, seed=6))
        for i in range(3):
            assert float(sal[i].max()) == pytest.approx(1.0, abs=1e-6)

    def test_ignored_channel_has_zero_saliency(self):
        torch.manual_seed(7)
        d = Discriminator(TINY)
        with torch.no_grad():
            d.net[0].weight[:, 2] = 0.0  # sever the third input channel
        sal = saliency_map(d, rand_image(seed=7))
        assert (sal[:, 2] == 0).all()
        assert sal[:, :2].max() > 0

    def test_zero_gradient_gives_zero_map(self):
        torch.manual_seed(8)
        d = Discriminator(TINY)
        with torch.no_grad():
            d.net[0].weight.zero_()
            d.net[0].bias.zero_()
        sal = saliency_map(d, rand_image(seed=8))
        assert (sal == 0).all()


def test_build_pairs():
    torch.manual_seed(0)
    g_ab, g_ba = build_generators(TINY)
    d_he, d_p63 = build_discriminators(TINY)
    assert g_ab.direction == "he2p63" and g_ba.direction == "p632he"
    assert not torch.equal(d_he.net[0].weight, d_p63.net[0].weight)
