"""Denoising-diffusion machinery over flat articulation vectors.

A linear variance schedule defines the forward noising chain; the
reverse chain walks back with a noise-prediction callable.  The
conditioned sampler overwrites the known channels at every step with a
forward-noised copy of the conditioning vector, so the output agrees
with it exactly on the mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DenoiserFn = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Per-step noise tables: beta, alpha = 1 - beta, their running
    product alpha_bar, and the reverse-step deviation sigma = sqrt(beta).

    Arrays are indexed by t - 1 for t in [1, T].
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.beta)

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.n_steps:
            raise ValueError(f"step {t} outside [1, {self.n_steps}]")
        return t

    def alpha_bar_prev(self, t: int) -> float:
        """alpha_bar at step t - 1, defined as 1 at the chain start."""
        t = self.check_t(t)
        return float(self.alpha_bar[t - 2]) if t >= 2 else 1.0

    def to_dict(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "beta_start": float(self.beta[0]),
            "beta_end": float(self.beta[-1]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        return make_schedule(d["n_steps"], d["beta_start"], d["beta_end"])


def make_schedule(n_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta schedule between the given bounds.

    Equal bounds give a constant schedule; decreasing bounds are
    rejected.
    """
    if n_steps < 1:
        raise ValueError("need at least one step")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(
            f"invalid beta bounds ({beta_start}, {beta_end}); "
            "need 0 < start <= end < 1"
        )
    beta = np.linspace(beta_start, beta_end, n_steps)
    alpha = 1.0 - beta
    return NoiseSchedule(
        beta=beta,
        alpha=alpha,
        alpha_bar=np.cumprod(alpha),
        sigma=np.sqrt(beta),
    )


def q_step(x_prev: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule):
    """One forward noising step: x_t given x_{t-1}."""
    t = schedule.check_t(t)
    b = schedule.beta[t - 1]
    return np.sqrt(1.0 - b) * x_prev + np.sqrt(b) * eps


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule):
    """Jump straight from x_0 to x_t using the closed-form marginal."""
    t = schedule.check_t(t)
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    ab = schedule.alpha_bar[t - 1]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def reverse_step(
    x_t: np.ndarray,
    t: int,
    eps_pred: np.ndarray,
    z: np.ndarray | None,
    schedule: NoiseSchedule,
):
    """One reverse step: posterior mean from the predicted noise plus
    sigma-scaled Gaussian innovation (suppressed at t = 1)."""
    t = schedule.check_t(t)
    a = schedule.alpha[t - 1]
    ab = schedule.alpha_bar[t - 1]
    mean = (x_t - (1.0 - a) / np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(a)
    if t == 1 or z is None:
        return mean
    return mean + schedule.sigma[t - 1] * z


def loss_weight(t: int, schedule: NoiseSchedule) -> float:
    """Per-step coefficient of the weighted noise-matching objective:
    beta_t^2 / (2 sigma_t^2 alpha_t (1 - alpha_bar_t))."""
    t = schedule.check_t(t)
    b = schedule.beta[t - 1]
    return float(
        b**2
        / (
            2.0
            * schedule.sigma[t - 1] ** 2
            * schedule.alpha[t - 1]
            * (1.0 - schedule.alpha_bar[t - 1])
        )
    )


def draw_training_batch(
    x0: np.ndarray, rng: np.random.Generator, schedule: NoiseSchedule
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw (t, eps, x_t) rows for a batch of clean vectors.

    t is uniform over [1, T] per sample; the same draw protocol is used
    by the training step and by validation-loss evaluation.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n = x0.shape[0]
    t = rng.integers(1, schedule.n_steps + 1, size=n)
    eps = rng.standard_normal(x0.shape)
    ab = schedule.alpha_bar[t - 1][:, None]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    return t, eps, x_t


def training_loss(
    x0: np.ndarray,
    denoiser: DenoiserFn,
    rng: np.random.Generator,
    schedule: NoiseSchedule,
    weighted: bool = False,
) -> float:
    """Mean noise-matching loss over a batch of clean vectors.

    Per sample the loss is the squared L2 norm of (eps - eps_pred);
    ``weighted`` multiplies each sample by the step-dependent bound
    coefficient.
    """
    t, eps, x_t = draw_training_batch(x0, rng, schedule)
    total = 0.0
    for i in range(len(t)):
        resid = eps[i] - np.asarray(denoiser(x_t[i], int(t[i])), dtype=float)
        term = float(resid @ resid)
        if weighted:
            term *= loss_weight(int(t[i]), schedule)
        total += term
    return total / len(t)


def sample(
    denoiser: DenoiserFn,
    schedule: NoiseSchedule,
    dim: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw one vector by running the full reverse chain from N(0, I)."""
    x = rng.standard_normal(dim)
    for t in range(schedule.n_steps, 0, -1):
        eps_pred = np.asarray(denoiser(x, t), dtype=float)
        z = rng.standard_normal(dim) if t > 1 else None
        x = reverse_step(x, t, eps_pred, z, schedule)
    return x


def conditioned_sample(
    denoiser: DenoiserFn,
    schedule: NoiseSchedule,
    x_known: np.ndarray,
    mask: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Reverse chain that pins the masked channels to ``x_known``.

    At each step the known channels are replaced by a forward-noised
    copy of ``x_known`` at the matching noise level; the final step
    noise level is zero, so the output equals ``x_known`` exactly on
    the mask.  An all-zero mask reproduces the unconditional sampler
    draw for draw.
    """
    x_known = np.asarray(x_known, dtype=float)
    mask = np.asarray(mask)
    if mask.shape != x_known.shape:
        raise ValueError(f"mask shape {mask.shape} != known shape {x_known.shape}")
    mask = mask.astype(bool)
    dim = x_known.shape[0]
    has_known = bool(mask.any())
    x = rng.standard_normal(dim)
    for t in range(schedule.n_steps, 0, -1):
        eps_pred = np.asarray(denoiser(x, t), dtype=float)
        z = rng.standard_normal(dim) if t > 1 else None
        x = reverse_step(x, t, eps_pred, z, schedule)
        if has_known:
            ab_prev = schedule.alpha_bar_prev(t)
            if ab_prev == 1.0:
                known_noisy = x_known
            else:
                eps_k = rng.standard_normal(dim)
                known_noisy = np.sqrt(ab_prev) * x_known + np.sqrt(
                    1.0 - ab_prev
                ) * eps_k
            x = np.where(mask, known_noisy, x)
    return x
