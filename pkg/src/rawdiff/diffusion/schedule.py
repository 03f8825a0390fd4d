"""DDPM noise schedule, forward noising and the strided ancestral reverse chain."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class NoiseSchedule:
    """Linear betas; all arrays are indexed by ``t - 1`` for t in 1..T."""

    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    betas: np.ndarray = field(init=False, repr=False)
    alphas: np.ndarray = field(init=False, repr=False)
    alpha_bar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.beta_start <= self.beta_end < 1:
            raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {self.beta_start}, {self.beta_end}")
        self.betas = np.linspace(self.beta_start, self.beta_end, self.T, dtype=np.float64)
        self.alphas = 1.0 - self.betas
        self.alpha_bar = np.cumprod(self.alphas)

    def abar(self, t):
        """alpha_bar at timestep(s) t in 1..T; t=0 maps to 1 (clean)."""
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError(f"timestep out of range [0, {self.T}]: {t}")
        padded = np.concatenate([[1.0], self.alpha_bar])
        return padded[t]

    def strided_timesteps(self, steps: int) -> np.ndarray:
        """``steps`` distinct timesteps from T down to 1."""
        steps = int(min(max(steps, 1), self.T))
        return np.unique(np.round(np.linspace(1, self.T, steps)).astype(np.int64))[::-1]


def _bcast(v, ndim):
    v = np.asarray(v, dtype=np.float64)
    return v.reshape(v.shape + (1,) * (ndim - v.ndim)) if v.ndim else v


def forward_diffuse(z0, t, eps, schedule: NoiseSchedule):
    """z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps; ``t`` scalar or one per batch row."""
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if z0.shape != eps.shape:
        raise ValueError(f"noise shape {eps.shape} differs from latent shape {z0.shape}")
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > schedule.T):
        raise ValueError(f"timestep out of range [1, {schedule.T}]: {t}")
    ab = _bcast(schedule.abar(t), z0.ndim)
    out = np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps
    return out.astype(np.result_type(z0.dtype, eps.dtype), copy=False)


def reverse_chain(eps_fn, z_start, schedule: NoiseSchedule, steps: int = 50, rng=None,
                  noise_scale: float = 1.0, return_trajectory: bool = False):
    """Ancestral DDPM sampling over a strided subset of timesteps.

    ``eps_fn(z, t)`` returns the noise estimate for latent ``z`` at integer
    timestep ``t``. Between consecutive strided steps t > s the chain uses the
    exact Gaussian posterior q(z_s | z_t, z0_hat) of the respaced process.
    ``noise_scale=0`` drops the injected noise (posterior-mean chain).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    z = np.asarray(z_start, dtype=np.float64)
    ts = schedule.strided_timesteps(steps)
    traj = [z]
    for i, t in enumerate(ts):
        s = ts[i + 1] if i + 1 < len(ts) else 0
        ab_t, ab_s = float(schedule.abar(t)), float(schedule.abar(s))
        eps = np.asarray(eps_fn(z.astype(np.float32), int(t)), dtype=np.float64)
        z0_hat = (z - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
        beta = 1.0 - ab_t / ab_s
        c0 = np.sqrt(ab_s) * beta / (1.0 - ab_t)
        ct = np.sqrt(1.0 - beta) * (1.0 - ab_s) / (1.0 - ab_t)
        z = c0 * z0_hat + ct * z
        if s > 0 and noise_scale:
            var = beta * (1.0 - ab_s) / (1.0 - ab_t)
            z = z + noise_scale * np.sqrt(var) * rng.standard_normal(z.shape)
        traj.append(z)
    return (z, traj) if return_trajectory else z
