"""
Operators on a small simplicial complex
=======================================

Boundaries, coboundaries and Hodge Laplacians of a tetrahedron surface, and
what their kernels say about its holes.
"""

# %% A hollow tetrahedron: four triangles, no solid interior
import numpy as np

from cochain import (
    betti_numbers,
    block_operator,
    boundary_matrix,
    build_complex,
    coboundary_matrix,
    cochain_new,
    euler_characteristic,
    hodge_laplacian,
    apply,
)

K = build_complex([(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])
print("simplices per dimension:", K.shape)
print("edges in index order:", K.simplices(1))

# %% Boundary of boundary vanishes
B1 = boundary_matrix(K, 1)
B2 = boundary_matrix(K, 2)
print((B1 @ B2).toarray())

# %% The coboundary is the transposed boundary one degree up
d0 = coboundary_matrix(K, 0)
print(np.array_equal(d0.toarray(), B1.toarray().T))

# %% A vertex function and its edge differences
f = cochain_new(K, 0, [[0.0], [1.0], [3.0], [6.0]])
print(apply(d0, f).values.ravel())

# %% Hodge Laplacians and their null spaces
for k in range(K.dim + 1):
    L = hodge_laplacian(K, k).toarray()
    ev = np.linalg.eigvalsh(L)
    print(k, "zero eigenvalues:", int(np.sum(np.abs(ev) < 1e-10)))

print("betti:", betti_numbers(K), "euler:", euler_characteristic(K))

# %% Filling the interior kills the 2-dimensional hole
solid = build_complex([(0, 1, 2, 3)])
print("betti of the solid tetrahedron:", betti_numbers(solid))

# %% One operator acting on all degrees at once
M = block_operator(K, {(0, 1): B1, (1, 0): d0, (1, 2): B2, (2, 1): coboundary_matrix(K, 1)})
print("block operator shape:", M.shape, "symmetric:", np.array_equal(M.toarray(), M.toarray().T))
