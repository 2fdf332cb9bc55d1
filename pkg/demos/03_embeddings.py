"""
Structure-preserving embeddings
===============================

Three losses compare a point cloud with its image: pairwise distances,
neighbour probabilities, and persistence diagrams.
"""

# %% A noisy circle lifted into five dimensions
import numpy as np

from cochain import (
    TrainConfig,
    distance_matrix,
    embed,
    mds_loss,
    persistent_homology,
    ph_loss,
)

rng = np.random.default_rng(3)
t = rng.uniform(0, 2 * np.pi, size=24)
circle = np.c_[np.cos(t), np.sin(t)] + 0.05 * rng.normal(size=(24, 2))
Q = np.linalg.qr(rng.normal(size=(5, 2)))[0]
X = circle @ Q.T
print(X.shape)

# %% Distance matching
mds = embed(X, "mds", 2, TrainConfig(lr=0.005, momentum=0.9, max_iter=3000, seed=1))
print("mds loss", mds.loss_history[0], "->", mds.final_loss)
print("stress against the planar circle:", mds_loss(distance_matrix(circle), distance_matrix(mds.Y)))

# %% Neighbour probabilities
res = embed(X, "tsne", 2, TrainConfig(lr=1.0, momentum=0.5, max_iter=500, seed=1), perplexity=5)
print("kl loss", res.loss_history[0], "->", res.final_loss)

# %% Persistence from a random start lowers the loss but does not rebuild the loop
print("H1 of the data:", persistent_homology(distance_matrix(X)).diagrams[1])
res = embed(X, "ph", 2, TrainConfig(lr=0.01, max_iter=150, seed=1), ph_distance="matching_oracle")
print("ph loss", res.loss_history[0], "->", res.final_loss)
print("H1 of the embedding:", persistent_homology(distance_matrix(res.Y)).diagrams[1])

# %% Started near a good embedding, the same loss pulls the loop into place
init = mds.Y + 0.1 * rng.normal(size=mds.Y.shape)
res = embed(X, "ph", 2, TrainConfig(lr=0.01, max_iter=100), init=init, ph_distance="matching_oracle")
print("ph loss", res.loss_history[0], "->", res.final_loss)
print("H1 of the embedding:", persistent_homology(distance_matrix(res.Y)).diagrams[1])
print("sinkhorn value at the end:", ph_loss(X, res.Y))
