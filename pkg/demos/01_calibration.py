# %% [markdown]
# # Noise calibration under two accountants
# How much Gaussian noise does a fixed (eps, delta) budget buy when a
# subsampled mechanism runs for many iterations?

# %%
from dataclasses import replace

from dpdropout import accountant as acc

N, S, E = 1439, 100, 100
cfg = acc.AccountantConfig(iterations=E * N // S, sampling_ratio=S / N)

# %% forward direction: sigma -> total budget
for method in acc.Method:
    a = acc.account(5.0, 1e-4, replace(cfg, method=method))
    print(f"{method.value:>4}: per-iter eps {a.per_iteration.eps:.4f}, "
          f"amplified {a.amplified.eps:.2e}, total eps {a.total.eps:.4f}")

# %% inverse: budget -> sigma
for eps in (10, 1, 0.5):
    s_ac = acc.calibrate_sigma_ac(eps, 1e-4, cfg)
    s_z = acc.calibrate_sigma_zcdp(eps, 1e-4, cfg)
    print(f"eps={eps:>4}: sigma_AC={s_ac:8.3f}  sigma_zCDP={s_z:7.3f}  ratio {s_ac / s_z:.2f}")

# %% the delta split moves sigma too
for split in (1e-3, 0.1, 0.5, 0.9):
    c = replace(cfg, delta_split=split)
    print(f"split {split:<6} sigma_zCDP={acc.calibrate_sigma_zcdp(1.0, 1e-4, c):.3f}")
