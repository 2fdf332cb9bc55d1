"""
Persistence diagrams and their distances
========================================
"""

# %%
import numpy as np

from cochain import (
    bottleneck_distance,
    critical_edges,
    diagram_distance,
    distance_matrix,
    persistent_homology,
    vietoris_rips,
)

square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
filt = vietoris_rips(distance_matrix(square))
for s, v in zip(filt.simplices, filt.values):
    print(s, round(float(v), 4))

# %% Components merge at 1; the square loop lives until the diagonals arrive
ps = persistent_homology(distance_matrix(square))
print(ps.diagrams[0])
print(ps.diagrams[1])

# %% Each diagram value is the length of one edge
print(critical_edges(ps)[1])

# %% Distances between diagrams: exact matching and its entropic relaxation
A = np.array([[0.0, 1.0], [0.2, 0.5]])
B = np.array([[0.0, 1.2]])
print("matching:", diagram_distance(A, B))
for eps in (0.1, 0.01, 0.001):
    print("sinkhorn eps", eps, diagram_distance(A, B, method="sinkhorn", eps=eps, n_iter=2000))
print("bottleneck:", bottleneck_distance(A, B))

# %% Small perturbations move diagrams by at most twice the largest coordinate shift times sqrt(d)
rng = np.random.default_rng(0)
X = rng.normal(size=(12, 3))
delta = 0.01
Xp = X + rng.uniform(-delta, delta, size=X.shape)
a, b = persistent_homology(distance_matrix(X)), persistent_homology(distance_matrix(Xp))
for k in (0, 1):
    print(k, bottleneck_distance(a.diagrams, b.diagrams, k), "<=", 2 * delta * np.sqrt(3))
