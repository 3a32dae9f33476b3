"""Forward-diffusion noise schedule and the closed-form noising marginal."""

from __future__ import annotations

import numpy as np
import torch


class NoiseSchedule:
    """Linear-beta schedule with betas rescaled by reference_T / T.

    The (beta_start, beta_end) pair is defined at a 1000-step reference;
    shorter schedules scale both ends up so the terminal signal level stays
    negligible (cumulative alpha product below 0.01) at any step count.
    """

    def __init__(
        self,
        timesteps: int = 200,
        beta_start: float = 1e-4,
        beta_end: float = 2e-2,
        reference_timesteps: int = 1000,
    ):
        if timesteps < 2:
            raise ValueError("need at least 2 timesteps")
        scale = reference_timesteps / timesteps
        betas = np.linspace(beta_start * scale, beta_end * scale, timesteps, dtype=np.float64)
        # very short (test-sized) schedules need betas near 1 to wipe the
        # signal; cap them below 1 so the chain stays well defined
        betas = np.minimum(betas, 0.9)
        if betas[0] <= 0 or betas[-1] >= 1:
            raise ValueError(f"betas out of (0,1): [{betas[0]}, {betas[-1]}]")
        alpha_bar = np.cumprod(1.0 - betas)
        if not np.all(np.diff(alpha_bar) < 0):
            raise ValueError("cumulative alpha product must be strictly decreasing")
        if alpha_bar[-1] >= 0.01:
            raise ValueError(
                f"terminal signal level too high: alpha_bar_T = {alpha_bar[-1]:.4f}"
            )
        self.timesteps = timesteps
        self.betas = torch.from_numpy(betas)
        self.alphas = 1.0 - self.betas
        self.alpha_bars = torch.from_numpy(alpha_bar)

    def alpha_bar(self, t: int) -> float:
        """Cumulative alpha product at step t, with alpha_bar(0) = 1."""
        self._check(t, allow_zero=True)
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def add_noise(self, z0: torch.Tensor, t: int, eps: torch.Tensor) -> torch.Tensor:
        """Closed-form forward marginal z_t = sqrt(ab_t) z0 + sqrt(1-ab_t) eps."""
        self._check(t, allow_zero=True)
        if eps.shape != z0.shape:
            raise ValueError(f"eps shape {eps.shape} != z0 shape {z0.shape}")
        ab = self.alpha_bar(t)
        return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps

    def add_noise_batch(self, z0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
        """Batched marginal; t is a long tensor of per-sample steps in [1, T]."""
        if torch.any(t < 1) or torch.any(t > self.timesteps):
            raise ValueError("timesteps out of [1, T]")
        ab = self.alpha_bars.to(z0.dtype)[t - 1].view(-1, *([1] * (z0.dim() - 1)))
        return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps

    def to_dict(self) -> dict:
        return {
            "timesteps": self.timesteps,
            "betas": self.betas.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSchedule":
        schedule = cls.__new__(cls)
        betas = np.asarray(data["betas"], dtype=np.float64)
        schedule.timesteps = int(data["timesteps"])
        schedule.betas = torch.from_numpy(betas)
        schedule.alphas = 1.0 - schedule.betas
        schedule.alpha_bars = torch.from_numpy(np.cumprod(1.0 - betas))
        return schedule

    def _check(self, t: int, allow_zero: bool = False) -> None:
        lo = 0 if allow_zero else 1
        if not (lo <= t <= self.timesteps):
            raise ValueError(f"timestep {t} out of [{lo}, {self.timesteps}]")
