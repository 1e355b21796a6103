"""Lattice occupancy and pruning windows for a long utterance pair.

Needs matplotlib (``pip install .[demo]``). Writes ``occupancy.png``.
"""

# %%
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from multitalk.lattice import occupancy, prune_bounds

rng = np.random.default_rng(0)
T, V = 395, 64

# %% Encoder and predictor scores that favour a roughly diagonal alignment
fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=False)
for ax, U in zip(axes, (79, 44)):
    labels = rng.integers(1, V, size=U)
    enc = rng.normal(scale=0.3, size=(T, V))
    pred = rng.normal(scale=0.3, size=(U + 1, V))
    enc[:, 0] += 2.0  # blanks are common
    # label u is "spoken" around frame u * T / U
    for t in range(T):
        enc[t, labels[min(t * U // T, U - 1)]] += 6.0
    grid = occupancy(enc, labels, pred=pred)
    bounds = prune_bounds(enc, pred, labels, window=5)

    ax.imshow(grid.node.T, origin="lower", aspect="auto", cmap="magma")
    ax.plot(np.arange(T), bounds.lo, "c-", lw=0.8)
    ax.plot(np.arange(T), bounds.hi - 1, "c-", lw=0.8)
    ax.set_title(f"T={T}, U={U}")
    ax.set_xlabel("frame t")
    ax.set_ylabel("label position u")

fig.tight_layout()
fig.savefig("occupancy.png", dpi=120)
print("wrote occupancy.png")
