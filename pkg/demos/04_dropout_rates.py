# %% [markdown]
# # Reading the noise as dropout
# Each weight's additive noise is equivalent to Gaussian dropout with
# alpha = (2 C sigma)^2 / theta^2. Small weights are dropped almost surely.

# %%
import numpy as np

from dpdropout import NoiseSpec, dropout_alpha_from_noise, init_params
from dpdropout.mechanism import alpha_to_drop_prob

spec = NoiseSpec(clip_threshold=3.0, sigma=3.23)
print("noise std per coordinate:", spec.noise_std)

# %%
theta = np.array([0.01, 0.1, 1.0, 10.0, 19.38, 100.0])
rates = dropout_alpha_from_noise(spec, theta)
for w, a, p in zip(theta, rates.alpha, rates.drop_prob):
    print(f"|theta|={w:7.2f}  alpha={a:12.4g}  p={p:.4f}")

# %% a freshly initialised net
params = init_params(64, 500, 10, seed=0)
print(dropout_alpha_from_noise(spec, params.flat()).summary())

# %% Bernoulli rate 0.5 corresponds to alpha = 1
print(alpha_to_drop_prob(1.0))
