# %% [markdown]
# # Two classes, two descriptors
#
# For classification, a descriptor pair is judged by how much the two
# classes' convex domains overlap in the plane it spans. Here the classes are
# split by the curve `f1/f2 + f3^2 = 3`, so the pair `(f1/f2, f3^2)` separates
# them perfectly. Any increasing function of f3 separates them just as well,
# so do not be surprised to see `log(f3)` or `sqrt(f3)` win instead.

# %%
import numpy as np

from rfsisso import ForestConfig, SisConfig, SpaceConfig, run_sisso
from rfsisso.data import Dataset, FeatureColumn, Target, split_subsets
from rfsisso.forest import fit_predict_forest

rng = np.random.default_rng(11)
X = rng.uniform(1, 2, size=(600, 5))
s = X[:, 0] / X[:, 1] + X[:, 2] ** 2
keep = np.abs(s - 3.0) > 0.15
X, s = X[keep][:150], s[keep][:150]
labels = (s > 3.0).astype(int)

cols = tuple(FeatureColumn(f"f{j + 1}", X[:, j]) for j in range(5))
ds = Dataset(cols, Target("classification", labels, ("metal", "insulator"), "phase"))
train, test = split_subsets(ds, 100, 1, seed=0)[0]

# %% [markdown]
# A rung-1 space is enough: both descriptors are one operator away from the
# primaries.

# %%
res = run_sisso(train, SpaceConfig(rung=1), SisConfig(task="classification", subspace_size=20))
best = res.best
print("descriptors:", best.labels)
print("overlap:", int(best.score), " margin:", round(best.margin, 3))
print("train accuracy:", best.evaluate(train)["accuracy"], " test accuracy:", best.evaluate(test)["accuracy"])
w, b = best.classifier.boundary()
print(f"boundary: {w[0]:+.3f}*d1 {w[1]:+.3f}*d2 {b:+.3f} = 0")

# %% [markdown]
# For comparison, a random forest on the raw primaries:

# %%
_, rf_train, rf_test = fit_predict_forest(train, test, ForestConfig(), seed=0)
print(f"forest: train {rf_train:.3f}, test {rf_test:.3f}")

# %% [markdown]
# If matplotlib is around, draw the descriptor plane.

# %%
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    D = best.descriptor_values(ds)
    fig, ax = plt.subplots(figsize=(5, 4))
    for k, name in enumerate(ds.target.classes):
        pts = D[ds.y == k]
        ax.scatter(pts[:, 0], pts[:, 1], s=12, label=name)
    xs = np.linspace(D[:, 0].min(), D[:, 0].max(), 50)
    ax.plot(xs, -(w[0] * xs + b) / w[1], "k--", lw=1)
    ax.set_xlabel(best.labels[0])
    ax.set_ylabel(best.labels[1])
    ax.legend()
    fig.tight_layout()
    fig.savefig("descriptor_plane.png", dpi=120)
    print("saved descriptor_plane.png")
