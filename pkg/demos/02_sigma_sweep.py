# %% [markdown]
# # sigma against eps
# A log-spaced sweep; the zCDP curve sits below the AC curve everywhere.

# %%
import numpy as np

from dpdropout import accountant as acc
from dpdropout.harness import sweep_sigma_vs_eps, sweep_to_csv

cfg = acc.AccountantConfig(iterations=20000, sampling_ratio=0.01)
rows = sweep_sigma_vs_eps(cfg, np.geomspace(0.1, 20, 25), delta_tot=1e-4)
print(sweep_to_csv(rows))

# %% optional plot
try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    eps = [r.eps for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(eps, [r.sigma_ac for r in rows], "o-", label="AC")
    ax.loglog(eps, [r.sigma_zcdp for r in rows], "s-", label="zCDP")
    ax.set_xlabel("total eps")
    ax.set_ylabel("noise multiplier sigma")
    ax.legend()
    fig.tight_layout()
    fig.savefig("sigma_vs_eps.png", dpi=120)
    print("wrote sigma_vs_eps.png")
