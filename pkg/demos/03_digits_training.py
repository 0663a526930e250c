# %% [markdown]
# # Training on the bundled DIGITS split
# One non-private run and one private run per accountant, 20 epochs each
# to keep the demo short. Watch the private traces: with the noise scale
# these budgets call for, accuracy stays near chance.

# %%
from dpdropout import TrainConfig, load_bundled_digits, train_dpd, train_nonprivate

train, test = load_bundled_digits()
print(f"{train.n_examples} train / {test.n_examples} test, {train.n_features} features")

base = TrainConfig(method="none", hidden_units=500, batch_size=100, epochs=20, eta0=0.05)

# %%
np_run = train_nonprivate(base, train, test)
print("non-private:", [round(r.test_accuracy, 3) for r in np_run.trace.records[::4]])

# %%
for method in ("zcdp", "ac"):
    run = train_dpd(base.replace(method=method, epsilon=1.0, clip_threshold=2.0), train, test)
    r = run.report
    print(f"{method}: sigma={r.sigma:.3f} eps_tot={r.eps_tot:.3f} "
          f"final acc {run.final_accuracy:.3f}, clipped {run.trace.records[-1].clip_fraction:.0%} of steps")

# %% trace as CSV
print(np_run.trace.to_csv()[:300])
