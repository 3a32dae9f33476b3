import pytest
import torch

from urbansynth.control import ControlBranch, train_control
from urbansynth.control.branch import controlled_forward
from urbansynth.diffusion import (
    DenoiserUNet,
    NoiseSchedule,
    PromptTokenizer,
    TextEncoder,
    state_digest,
)


@pytest.fixture()
def setup():
    torch.manual_seed(2)
    backbone = DenoiserUNet(base=16, text_dim=8)
    branch = ControlBranch(backbone, constraint_channels=3)
    return backbone, branch


def test_fresh_branch_is_bitwise_noop_across_20_inputs(setup):
    backbone, branch = setup
    backbone.eval()
    branch.eval()
    for trial in range(20):
        gen = torch.Generator().manual_seed(trial)
        z = torch.randn(1, 4, 8, 8, generator=gen)
        t = torch.randint(1, 50, (1,), generator=gen)
        text = torch.randn(1, 4, 8, generator=gen)
        mask = (torch.rand(1, 3, 32, 32, generator=gen) > 0.8).float()
        with torch.no_grad():
            base = backbone(z, t, text)
            controlled = controlled_forward(backbone, branch, z, t, text, mask)
        assert torch.equal(base, controlled)


def test_zero_conv_outputs_exactly_zero(setup):
    _, branch = setup
    z = torch.randn(2, 4, 8, 8)
    t = torch.tensor([3, 7])
    text = torch.randn(2, 4, 8)
    mask = torch.ones(2, 3, 32, 32)
    with torch.no_grad():
        residuals = branch(z, t, text, mask)
    for site, r in residuals.items():
        assert torch.count_nonzero(r) == 0, site


def test_resolution_mismatch_rejected(setup):
    backbone, branch = setup
    z = torch.randn(1, 4, 8, 8)
    mask = torch.ones(1, 3, 16, 16)  # 16/4 = 4 != 8 latent
    with pytest.raises(ValueError, match="resolution"):
        branch(z, torch.tensor([1]), torch.randn(1, 4, 8), mask)


def test_gradient_nonzero_at_initialization(setup):
    # the property that lets training escape the zero init: dL/dZ != 0
    backbone, branch = setup
    schedule = NoiseSchedule(timesteps=20)
    gen = torch.Generator().manual_seed(0)
    z0 = torch.randn(4, 4, 8, 8, generator=gen)
    text = torch.randn(4, 4, 8, generator=gen)
    mask = (torch.rand(4, 3, 32, 32, generator=gen) > 0.7).float()

    t = torch.randint(1, 21, (4,), generator=gen)
    eps = torch.randn(z0.shape, generator=gen)
    zt = schedule.add_noise_batch(z0, t, eps)
    pred = controlled_forward(backbone, branch, zt, t, text, mask)
    loss = torch.mean((pred - eps) ** 2)
    loss.backward()

    grad_norm = sum(
        float(c.weight.grad.abs().sum()) for c in branch.zero_convs.values()
    )
    assert grad_norm > 0

    # finite-difference probe on one zero-conv weight confirms the analytic sign
    conv = branch.zero_convs["mid"]
    idx = (0, 0, 0, 0)
    analytic = float(conv.weight.grad[idx])
    h = 1e-2  # large enough to clear float32 cancellation noise
    with torch.no_grad():
        conv.weight[idx] += h
        up = float(torch.mean((controlled_forward(backbone, branch, zt, t, text, mask) - eps) ** 2))
        conv.weight[idx] -= 2 * h
        down = float(torch.mean((controlled_forward(backbone, branch, zt, t, text, mask) - eps) ** 2))
        conv.weight[idx] += h
    fd = (up - down) / (2 * h)
    assert fd == pytest.approx(analytic, rel=5e-2, abs=1e-6)


def test_training_moves_branch_only_and_reduces_loss(setup):
    backbone, branch = setup
    tok = PromptTokenizer(max_length=16)
    torch.manual_seed(3)
    text_encoder = TextEncoder(tok.vocab_size, embed_dim=8, layers=1, max_length=16)
    schedule = NoiseSchedule(timesteps=20)

    n = 12
    gen = torch.Generator().manual_seed(1)
    latents = torch.randn(n, 4, 8, 8, generator=gen)
    token_ids = torch.stack([tok.encode(f"Satellite imagery of T. value {i}.00") for i in range(n)])
    masks = (torch.rand(n, 3, 32, 32, generator=gen) > 0.8).float()

    backbone_before = state_digest(backbone)
    branch_before = state_digest(branch)
    history = train_control(
        backbone, branch, text_encoder, schedule, latents, token_ids, masks,
        steps=30, batch_size=6, lr=1e-3, seed=0,
    )
    assert state_digest(backbone) == backbone_before
    assert state_digest(branch) != branch_before
    assert branch.zero_conv_weight_norm() > 0
    assert len(history) == 30
    assert min(history) < history[0]


def test_empty_corpus_rejected(setup):
    backbone, branch = setup
    tok = PromptTokenizer(max_length=16)
    text_encoder = TextEncoder(tok.vocab_size, embed_dim=8, layers=1, max_length=16)
    schedule = NoiseSchedule(timesteps=20)
    with pytest.raises(ValueError, match="empty"):
        train_control(
            backbone, branch, text_encoder, schedule,
            torch.zeros(0, 4, 8, 8), torch.zeros(0, 16, dtype=torch.long), torch.zeros(0, 3, 32, 32),
        )
