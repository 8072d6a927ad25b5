"""Conditional DDPM core: noise schedule, forward noising, reverse sampling.

The forward chain adds Gaussian noise to the future trajectory in K steps so
that the terminal state is approximately N(0, I); the reverse chain walks
back step by step, each step subtracting the noise predicted by the denoiser
conditioned on the observed history and the interaction graphs.

A denoiser is any callable ``eps = denoiser(y_k, k, x, a_hat)`` mapping the
current noisy future (F, V, T_pred) plus conditioning to a same-shape noise
estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_K = 100
DEFAULT_BETA_1 = 1e-4
DEFAULT_BETA_K = 0.05


@dataclass
class NoiseSchedule:
    """Linear variance schedule with its derived alpha sequences.

    Arrays are indexed 0..K-1 for steps 1..K; use :meth:`beta_at` and
    friends for 1-based access matching the process step index.
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def k_max(self) -> int:
        return len(self.beta)

    def beta_at(self, k: int) -> float:
        return float(self.beta[k - 1])

    def alpha_at(self, k: int) -> float:
        return float(self.alpha[k - 1])

    def alpha_bar_at(self, k: int) -> float:
        return float(self.alpha_bar[k - 1])


def make_noise_schedule(k_max=DEFAULT_K, beta_1=DEFAULT_BETA_1, beta_k=DEFAULT_BETA_K):
    """Build the linear beta schedule and its cumulative products."""
    if not (0.0 < beta_1 <= beta_k < 1.0):
        raise ValueError(f"need 0 < beta_1 <= beta_K < 1, got {beta_1}, {beta_k}")
    if k_max < 1:
        raise ValueError("K must be >= 1")
    beta = np.linspace(beta_1, beta_k, k_max)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def q_sample(y0, k, schedule, eps):
    """Closed-form forward noising: sqrt(a_bar_k) y0 + sqrt(1 - a_bar_k) eps."""
    y0 = np.asarray(y0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if y0.shape != eps.shape:
        raise ValueError(f"shape mismatch: y0 {y0.shape} vs eps {eps.shape}")
    if not (1 <= k <= schedule.k_max):
        raise ValueError(f"step {k} outside 1..{schedule.k_max}")
    ab = schedule.alpha_bar_at(k)
    return np.sqrt(ab) * y0 + np.sqrt(1.0 - ab) * eps


def p_sample_step(y_k, k, denoiser, x, a_hat, schedule, z, per_step_denominator=False):
    """One reverse transition from y_k to y_{k-1}.

    Uses the posterior-mean parameterization with variance beta_k. The noise
    term z is forced to zero at the final step k = 1. The default divisor on
    the predicted noise is sqrt(1 - alpha_bar_k); with
    ``per_step_denominator`` it becomes sqrt(1 - alpha_k).
    """
    if not (1 <= k <= schedule.k_max):
        raise ValueError(f"step {k} outside 1..{schedule.k_max}")
    y_k = np.asarray(y_k, dtype=float)
    beta = schedule.beta_at(k)
    alpha = schedule.alpha_at(k)
    denom = 1.0 - alpha if per_step_denominator else 1.0 - schedule.alpha_bar_at(k)
    eps_hat = np.asarray(denoiser(y_k, k, x, a_hat), dtype=float)
    if not np.all(np.isfinite(eps_hat)):
        raise FloatingPointError(f"non-finite denoiser output at step {k}")
    mean = (y_k - (beta / np.sqrt(denom)) * eps_hat) / np.sqrt(alpha)
    if k == 1:
        return mean
    return mean + np.sqrt(beta) * np.asarray(z, dtype=float)


def sample_trajectories(
    denoiser,
    x,
    a_hat,
    schedule,
    n_samples=20,
    rng=None,
    t_pred=None,
    per_step_denominator=False,
):
    """Draw n_samples future trajectories by running the full reverse chain.

    Returns an array (n_samples, F, V, T_pred). Deterministic given the rng
    seed. A sample that turns non-finite aborts with a diagnostic.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    x = np.asarray(x, dtype=float)
    f, v = x.shape[0], x.shape[1]
    if t_pred is None:
        raise ValueError("t_pred must be given")
    out = np.empty((n_samples, f, v, t_pred))
    for s in range(n_samples):
        y = rng.standard_normal((f, v, t_pred))
        for k in range(schedule.k_max, 0, -1):
            z = rng.standard_normal((f, v, t_pred)) if k > 1 else 0.0
            y = p_sample_step(
                y, k, denoiser, x, a_hat, schedule, z,
                per_step_denominator=per_step_denominator,
            )
            if not np.all(np.isfinite(y)):
                raise FloatingPointError(f"sampling diverged at step {k} (sample {s})")
        out[s] = y
    return out
