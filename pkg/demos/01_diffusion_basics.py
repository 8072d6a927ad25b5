"""Walk through the noise schedule and the forward/reverse diffusion steps.

Everything here is scalar-ish and closed-form so the numbers are easy to
check by hand: we noise a tiny "future" tensor, then run the reverse chain
with a denoiser that always predicts zero noise, which has a known answer.
"""

import numpy as np

from stgdpm.diffusion import make_noise_schedule, p_sample_step, q_sample

sch = make_noise_schedule(k_max=100, beta_1=1e-4, beta_k=0.05)
print(f"beta_1={sch.beta[0]:.2e}  beta_K={sch.beta[-1]:.2e}")
print(f"alpha_bar_K={sch.alpha_bar[-1]:.4f}  (well below 0.1: y_K is ~pure noise)")

# forward process: closed-form jump to any step k
rng = np.random.default_rng(0)
y0 = np.ones((2, 1, 500))  # (F, V, T_pred) -- long axis so means are visible
for k in (1, 50, 100):
    eps = rng.standard_normal(y0.shape)
    y_k = q_sample(y0, k, sch, eps)
    print(f"k={k:3d}  mean(y_k)={y_k.mean():+.3f}  expected {np.sqrt(sch.alpha_bar_at(k)):+.3f}")

# reverse process with a denoiser that predicts eps = 0: each step just
# rescales by 1/sqrt(alpha_k) and adds sqrt(beta_k) noise
def zero_denoiser(y_k, k, x, a_hat):
    return np.zeros_like(y_k)

y = q_sample(y0, 100, sch, rng.standard_normal(y0.shape))
for k in range(100, 0, -1):
    z = rng.standard_normal(y.shape) if k > 1 else np.zeros_like(y)
    y = p_sample_step(y, k, zero_denoiser, x=None, a_hat=None, schedule=sch, z=z)
print(f"after the reverse chain: std={y.std():.3f} (amplified noise; a real "
      "denoiser pulls this back toward the data)")
