import numpy as np
import pytest
import torch

from urbansynth.diffusion import (
    DenoiserUNet,
    ImageVAE,
    NoiseSchedule,
    PromptTokenizer,
    TextEncoder,
    ldm_loss,
    sample,
)


@pytest.fixture(scope="module")
def schedule():
    return NoiseSchedule(timesteps=200)


class TestSchedule:
    def test_terminal_signal_negligible(self, schedule):
        assert schedule.alpha_bar(schedule.timesteps) < 0.01

    def test_alpha_bar_strictly_decreasing(self, schedule):
        bars = schedule.alpha_bars.numpy()
        assert np.all(np.diff(bars) < 0)

    def test_full_scale_schedule_valid(self):
        s = NoiseSchedule(timesteps=1000)
        assert float(s.betas[0]) == pytest.approx(1e-4)
        assert float(s.betas[-1]) == pytest.approx(2e-2)
        assert s.alpha_bar(1000) < 0.01

    def test_t_zero_is_identity(self, schedule):
        z0 = torch.randn(4, 8, 8)
        out = schedule.add_noise(z0, 0, torch.randn(4, 8, 8))
        torch.testing.assert_close(out, z0)

    def test_linearity_in_signal_with_zero_eps(self, schedule):
        z0 = torch.randn(2, 4, 4)
        eps = torch.zeros_like(z0)
        a = schedule.add_noise(2 * z0, 100, eps)
        b = 2 * schedule.add_noise(z0, 100, eps)
        torch.testing.assert_close(a, b)

    def test_out_of_range_timestep_rejected(self, schedule):
        z0 = torch.randn(1, 2, 2)
        with pytest.raises(ValueError):
            schedule.add_noise(z0, 201, torch.randn(1, 2, 2))
        with pytest.raises(ValueError):
            schedule.add_noise(z0, -1, torch.randn(1, 2, 2))

    @pytest.mark.parametrize("t_frac", [0.25, 0.5, 1.0])
    def test_forward_marginals_match_closed_form(self, schedule, t_frac):
        # Monte Carlo check of the noising marginal over 10^4 draws
        t = max(1, int(round(t_frac * schedule.timesteps)))
        torch.manual_seed(0)
        z0 = torch.randn(4, 4, 4).double()
        draws = 10_000
        eps = torch.randn(draws, *z0.shape, dtype=torch.float64)
        zt = torch.stack([schedule.add_noise(z0, t, e) for e in eps])
        ab = schedule.alpha_bar(t)

        # tolerance relative to the unit latent scale: at large t the signal
        # mean is tiny and a per-element relative check would only measure
        # Monte Carlo noise
        expected_mean = np.sqrt(ab) * z0
        mean_err = float((zt.mean(0) - expected_mean).abs().mean())
        assert mean_err < 0.05

        expected_var = 1.0 - ab
        var = zt.var(dim=0, unbiased=True)
        assert float((var.mean() - expected_var).abs() / expected_var) < 0.05

    def test_variance_of_z_T_near_unit(self, schedule):
        assert 1.0 - schedule.alpha_bar(schedule.timesteps) > 0.95

    def test_round_trips_through_dict(self, schedule):
        clone = NoiseSchedule.from_dict(schedule.to_dict())
        torch.testing.assert_close(clone.alpha_bars, schedule.alpha_bars)


class TestVAE:
    def test_latent_shape_arithmetic(self):
        vae = ImageVAE(base=16)
        image = torch.rand(64, 64, 3)
        grid = vae.encode_image(image)
        assert grid.data.shape == (4, 16, 16)
        assert grid.timestep == 0

    def test_constant_zero_image_finite(self):
        vae = ImageVAE(base=16)
        grid = vae.encode_image(torch.zeros(64, 64, 3))
        assert torch.isfinite(grid.data).all()

    def test_decode_shape_and_range(self):
        vae = ImageVAE(base=16)
        grid = vae.encode_image(torch.rand(64, 64, 3))
        image = vae.decode_image(grid)
        assert image.shape == (64, 64, 3)
        assert image.min() >= 0 and image.max() <= 1

    def test_wrong_shape_rejected(self):
        vae = ImageVAE(base=16)
        with pytest.raises(ValueError):
            vae.encode_image(torch.rand(64, 64))
        with pytest.raises(ValueError):
            vae.encode_params(torch.rand(1, 3, 63, 63))


class TestTextEncoder:
    def test_deterministic_for_fixed_prompt(self):
        tok = PromptTokenizer()
        torch.manual_seed(0)
        enc = TextEncoder(tok.vocab_size)
        ids = tok.encode("Satellite imagery of Testville. The Building Coverage Ratio in this area is 10.00 %.")
        a = enc.encode(ids)
        b = enc.encode(ids)
        torch.testing.assert_close(a, b)

    def test_distinct_prompts_distinct_embeddings(self):
        tok = PromptTokenizer()
        torch.manual_seed(0)
        enc = TextEncoder(tok.vocab_size)
        a = enc.encode(tok.encode("Satellite imagery of A. value 1.00"))
        b = enc.encode(tok.encode("Satellite imagery of B. value 2.00"))
        assert not torch.allclose(a, b)

    def test_tokenizer_round_trips_through_dict(self):
        tok = PromptTokenizer()
        clone = PromptTokenizer.from_dict(tok.to_dict())
        prompt = "Satellite imagery of Busan. The Road Density is 3.10 kilometers per square kilometer."
        torch.testing.assert_close(tok.encode(prompt), clone.encode(prompt))


class TestLdmLoss:
    def _setup(self, batch=2):
        torch.manual_seed(1)
        schedule = NoiseSchedule(timesteps=50)
        model = DenoiserUNet(base=16, text_dim=8)
        z0 = torch.randn(batch, 4, 16, 16)
        text = torch.randn(batch, 4, 8)
        return schedule, model, z0, text

    def test_output_shape_contract(self):
        schedule, model, z0, text = self._setup()
        for t in (1, 25, 50):
            eps = model(z0, torch.full((2,), t), text)
            assert eps.shape == z0.shape

    def test_true_noise_oracle_gives_zero_loss(self):
        # teacher-forced oracle head: model that returns the injected noise
        schedule = NoiseSchedule(timesteps=50)
        z0 = torch.randn(3, 4, 8, 8)
        text = torch.randn(3, 4, 8)
        injected = {}

        class Oracle(torch.nn.Module):
            def forward(self, zt, t, text, control=None, return_features=False):
                ab = schedule.alpha_bars.float()[t - 1].view(-1, 1, 1, 1)
                return (zt - torch.sqrt(ab) * injected["z0"]) / torch.sqrt(1 - ab)

        injected["z0"] = z0
        loss = ldm_loss(Oracle(), schedule, z0, text, generator=torch.Generator().manual_seed(0))
        assert float(loss) == pytest.approx(0.0, abs=1e-10)

    def test_zero_predictor_loss_near_one(self):
        schedule = NoiseSchedule(timesteps=50)

        class Zero(torch.nn.Module):
            def forward(self, zt, t, text, control=None, return_features=False):
                return torch.zeros_like(zt)

        torch.manual_seed(0)
        z0 = torch.randn(64, 4, 8, 8) * 0.0  # pure-noise latents: loss = E||eps||^2
        text = torch.randn(64, 4, 8)
        loss = ldm_loss(Zero(), schedule, z0, text, generator=torch.Generator().manual_seed(1))
        assert float(loss) == pytest.approx(1.0, abs=0.05)

    def test_loss_nonnegative_and_empty_batch_rejected(self):
        schedule, model, z0, text = self._setup()
        loss = ldm_loss(model, schedule, z0, text, generator=torch.Generator().manual_seed(0))
        assert float(loss) >= 0
        with pytest.raises(ValueError):
            ldm_loss(model, schedule, z0[:0], text[:0])

    def test_gradient_matches_central_differences(self):
        # 2-parameter stub: eps_hat = a * z_t + b
        schedule = NoiseSchedule(timesteps=20)

        class Stub(torch.nn.Module):
            def __init__(self):
                super().__init__()
                self.a = torch.nn.Parameter(torch.tensor(0.3, dtype=torch.float64))
                self.b = torch.nn.Parameter(torch.tensor(-0.1, dtype=torch.float64))

            def forward(self, zt, t, text, control=None, return_features=False):
                return self.a * zt + self.b

        stub = Stub()
        z0 = torch.randn(4, 2, 4, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(3))
        text = torch.zeros(4, 1, 1, dtype=torch.float64)

        def loss_at(seed=7):
            return ldm_loss(stub, schedule, z0, text, generator=torch.Generator().manual_seed(seed))

        loss = loss_at()
        loss.backward()
        grads = {"a": float(stub.a.grad), "b": float(stub.b.grad)}

        h = 1e-6
        for name in ("a", "b"):
            param = getattr(stub, name)
            with torch.no_grad():
                param += h
            up = float(loss_at())
            with torch.no_grad():
                param -= 2 * h
            down = float(loss_at())
            with torch.no_grad():
                param += h
            fd = (up - down) / (2 * h)
            assert grads[name] == pytest.approx(fd, rel=1e-4)


class TestSampling:
    def _models(self):
        torch.manual_seed(5)
        vae = ImageVAE(base=8)
        model = DenoiserUNet(base=16, text_dim=8)
        schedule = NoiseSchedule(timesteps=8)
        text = torch.randn(1, 4, 8)
        return vae, model, schedule, text

    def test_identical_seeds_bitwise_equal(self):
        vae, model, schedule, text = self._models()
        a = sample(model, vae, schedule, text, seeds=[123], resolution=32)[0]
        b = sample(model, vae, schedule, text, seeds=[123], resolution=32)[0]
        assert torch.equal(a.image, b.image)

    def test_batching_does_not_change_per_seed_output(self):
        # per-sample generators: a seed's noise stream is independent of the
        # batch it rides in (bitwise equality is only contracted for
        # identical calls; batched conv kernels may reassociate floats)
        vae, model, schedule, text = self._models()
        solo = sample(model, vae, schedule, text, seeds=[9], resolution=32)[0]
        batched = sample(
            model, vae, schedule, text.repeat(3, 1, 1), seeds=[7, 9, 11], resolution=32
        )[1]
        torch.testing.assert_close(solo.image, batched.image, atol=1e-5, rtol=1e-4)

    def test_output_range_and_shape(self):
        vae, model, schedule, text = self._models()
        result = sample(model, vae, schedule, text, seeds=[1], resolution=32)[0]
        assert result.image.shape == (32, 32, 3)
        assert result.image.min() >= 0 and result.image.max() <= 1

    def test_feature_capture_at_t_star(self):
        vae, model, schedule, text = self._models()
        result = sample(model, vae, schedule, text, seeds=[1], resolution=32, capture_t_star=4)[0]
        assert result.features is not None
        assert set(result.features) == {"mid", "up8", "up16", "final16"}
        assert result.features["mid"].shape[-1] == 2  # 8x8 latent -> 2x2 bottleneck
