"""
Topological network layers
==========================

A layer is an operator followed by a channel mixing and a nonlinearity.
With trivial weights it is just the operator; written out per simplex it is
message passing.
"""

# %%
import numpy as np

from cochain import (
    Neighborhood,
    TNLayer,
    TrainConfig,
    apply,
    build_complex,
    build_expression,
    cochain_new,
    evaluate,
    hodge_laplacian,
    message_passing_forward,
    tn_forward,
    train_expression,
)

rng = np.random.default_rng(0)
K = build_complex([(0, 1, 2), (1, 2, 3), (2, 3, 4)])
L1 = hodge_laplacian(K, 1)
f = cochain_new(K, 1, rng.normal(size=(K.n(1), 2)))

# %% Identity weights and activation reduce a layer to the operator itself
plain = tn_forward(TNLayer(L1, np.eye(2)), f)
print(np.array_equal(plain.values, apply(L1, f).values))

# %% The same layer as messages gathered along nonzero operator entries
W = rng.normal(size=(2, 3))
dense = tn_forward(TNLayer(L1, W, "tanh"), f).values
local = message_passing_forward(K, Neighborhood.from_operator(L1), f, W, "tanh").values
print("largest difference:", np.abs(dense - local).max())

# %% Expressions: a learned map between vertices and edges, then d1 on top
x = cochain_new(K, 0, rng.normal(size=(K.n(0), 1)))
g = cochain_new(K, 2, rng.normal(size=(K.n(2), 1)))
expr = build_expression("d1(TN[d0](x)) = L2(g)", K, {"x": x, "g": g})
print(expr.describe())

# %% Whatever the weights, d1 after d0 is zero, so training cannot move the loss
_, history = train_expression(expr, {"x": x, "g": g}, TrainConfig(lr=0.1, max_iter=20))
print(history[:3], "...", history[-1])
print(evaluate(expr, {"x": x, "g": g}, [rng.normal(size=(1, 1))]).values.ravel())

# %% A two-layer network fitted to an edge signal
target = cochain_new(K, 1, np.sin(np.arange(K.n(1)))[:, None])
net = build_expression("TN[L1](TN[d0:4](x)) = y", K, {"x": x, "y": target}, activation="tanh")
weights, history = train_expression(net, {"x": x, "y": target}, TrainConfig(lr=0.005, momentum=0.5, max_iter=2000))
print("loss", history[0], "->", history[-1])
