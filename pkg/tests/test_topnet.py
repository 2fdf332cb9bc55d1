import numpy as np
import pytest

from cochain.complex import Cochain, build_complex, cochain_new, concat_cochains
from cochain.dec import (
    adjacency_matrix,
    apply,
    block_operator,
    boundary_matrix,
    coboundary_matrix,
    hodge_laplacian,
    identity_operator,
)
from cochain.errors import ChainDegreeError, DimensionError, ExpressionError
from cochain.optim import Objective, TrainConfig, finite_difference_check
from cochain.topnet import (
    Neighborhood,
    TNLayer,
    build_expression,
    evaluate,
    expression_gradients,
    expression_loss,
    init_weights,
    message_passing_forward,
    parse_expression,
    tn_forward,
    tn_gradients,
    train_expression,
    with_target,
)

from conftest import random_complex


def test_relu_identity_operator(path_graph):
    layer = TNLayer(identity_operator(path_graph, 0), np.eye(1), "relu")
    out = tn_forward(layer, cochain_new(path_graph, 0, [[1], [-2], [3]]))
    np.testing.assert_array_equal(out.values, [[1], [0], [3]])


def test_degenerate_layer_is_operator_application(filled_triangle):
    rng = np.random.default_rng(0)
    A = coboundary_matrix(filled_triangle, 0)
    f = cochain_new(filled_triangle, 0, rng.normal(size=(3, 4)))
    out = tn_forward(TNLayer(A, np.eye(4)), f)
    assert out.degree == 1
    assert out.values.tobytes() == apply(A, f).values.tobytes()


def test_scaled_laplacian(path_graph):
    layer = TNLayer(hodge_laplacian(path_graph, 0), [[2.0]])
    out = tn_forward(layer, cochain_new(path_graph, 0, [[1], [0], [0]]))
    np.testing.assert_array_equal(out.values, [[2], [-2], [0]])


def test_forward_shape_and_channel_check(filled_triangle):
    layer = TNLayer(hodge_laplacian(filled_triangle, 1), np.ones((2, 5)), "tanh")
    f = cochain_new(filled_triangle, 1, np.ones((3, 2)))
    assert tn_forward(layer, f).values.shape == (3, 5)
    with pytest.raises(DimensionError):
        tn_forward(layer, cochain_new(filled_triangle, 1, np.ones((3, 3))))
    with pytest.raises(DimensionError):
        tn_forward(layer, cochain_new(filled_triangle, 0, np.ones((3, 2))))


def test_gradients_linear_scalar(path_graph):
    f = cochain_new(path_graph, 0, [[1.0], [2.0], [-1.0]])
    up = np.array([[0.5], [1.0], [2.0]])
    gW, gf = tn_gradients(TNLayer(identity_operator(path_graph, 0), [[3.0]]), f, up)
    assert gW.shape == (1, 1)
    assert gW[0, 0] == pytest.approx((f.values.T @ up).item())
    np.testing.assert_allclose(gf.values, 3.0 * up)


def test_relu_gradient_zero_rows(path_graph):
    f = cochain_new(path_graph, 0, [[1.0], [-2.0], [3.0]])
    layer = TNLayer(identity_operator(path_graph, 0), [[1.0]], "relu")
    _, gf = tn_gradients(layer, f, np.ones((3, 1)))
    assert gf.values[1, 0] == 0.0
    assert gf.values[0, 0] == 1.0


def _layer_objectives(layer, f, up):
    def out(W, x):
        return tn_forward(TNLayer(layer.operator, W, layer.activation), f.with_values(x)).values

    obj_W = Objective(lambda W: float(np.sum(up * out(W, f.values))),
                      lambda W: tn_gradients(TNLayer(layer.operator, W, layer.activation), f, up)[0])
    obj_f = Objective(lambda x: float(np.sum(up * out(layer.weight, x))),
                      lambda x: tn_gradients(layer, f.with_values(x), up)[1].values)
    return obj_W, obj_f


@pytest.mark.parametrize("act", ["identity", "tanh", "sigmoid", "relu"])
def test_gradients_match_finite_differences(act):
    rng = np.random.default_rng(42)
    K = random_complex(rng, max_dim=2)
    k = int(rng.integers(0, K.dim + 1))
    A = hodge_laplacian(K, k)
    f = cochain_new(K, k, rng.normal(size=(K.n(k), 3)))
    layer = TNLayer(A, rng.normal(size=(3, 2)), act)
    up = rng.normal(size=(K.n(k), 2))
    obj_W, obj_f = _layer_objectives(layer, f, up)
    assert finite_difference_check(obj_W, layer.weight) < 1e-5
    assert finite_difference_check(obj_f, f.values) < 1e-5


def test_message_passing_one_hop(path_graph):
    nb = Neighborhood.from_operator(adjacency_matrix(path_graph))
    out = message_passing_forward(path_graph, nb, cochain_new(path_graph, 0, [[1], [0], [0]]))
    np.testing.assert_array_equal(out.values, [[0], [1], [0]])


def test_message_passing_empty_neighborhood(filled_triangle):
    A = block_operator(filled_triangle, {})
    nb = Neighborhood.from_operator(A)
    assert all(len(m) == 0 for m in nb.incoming)
    f = Cochain(filled_triangle, "mixed", np.ones((7, 2)))
    out = message_passing_forward(filled_triangle, nb, f, np.ones((2, 3)))
    np.testing.assert_array_equal(out.values, np.zeros((7, 3)))
    out = message_passing_forward(filled_triangle, nb, f, np.ones((2, 3)), "sigmoid")
    np.testing.assert_array_equal(out.values, np.full((7, 3), 0.5))


def test_message_passing_matches_matrix_form():
    rng = np.random.default_rng(7)
    for act in ("identity", "relu", "tanh", "sigmoid"):
        K = random_complex(rng, max_dim=2)
        k = int(rng.integers(0, K.dim + 1))
        A = hodge_laplacian(K, k)
        f = cochain_new(K, k, rng.normal(size=(K.n(k), 2)))
        W = rng.normal(size=(2, 4))
        mp = message_passing_forward(K, Neighborhood.from_operator(A), f, W, act)
        tn = tn_forward(TNLayer(A, W, act), f)
        assert np.max(np.abs(mp.values - tn.values)) < 1e-12


def test_mixed_degree_block_layer(filled_triangle):
    K = filled_triangle
    A = block_operator(K, {(0, 1): boundary_matrix(K, 1), (1, 0): coboundary_matrix(K, 0),
                           (1, 2): boundary_matrix(K, 2), (2, 1): coboundary_matrix(K, 1)})
    f = concat_cochains(K, {0: np.ones((3, 1)), 2: np.array([[2.0]])})
    out = tn_forward(TNLayer(A, np.eye(1)), f)
    assert out.degree == "mixed"
    # edge part of f is zero, so vertices get nothing; edges get d0(1) + b2(2)
    np.testing.assert_array_equal(out.values[:3], 0)
    np.testing.assert_array_equal(out.values[3:6, 0], [2, -2, 2])


# --- expressions ----------------------------------------------------------------


def test_parse_tree():
    assert parse_expression("d1(TN[d0](x)) = L2(g)") == (
        "eq", ("op", "d1", ("tn", "d0", None, ("var", "x"))), ("op", "L2", ("var", "g"))
    )
    assert parse_expression("TN[L0:4](x)") == ("tn", "L0", 4, ("var", "x"))


@pytest.mark.parametrize("bad", ["", "d1(", "TN[d0](x", "TN(x)", "x y", "d1(x))", "TN[d0:0](x)", "a = b = c"])
def test_parse_errors(bad):
    with pytest.raises(ExpressionError):
        parse_expression(bad)


def test_build_dd_expression(filled_triangle):
    K = filled_triangle
    f = cochain_new(K, 0, [[1.0], [2.0], [4.0]])
    g = cochain_new(K, 2, [[3.0]])
    expr = build_expression("d1(TN[d0](x)) = L2(g)", K, {"x": f, "g": g})
    assert expr.kind == "residual_target"
    assert expr.lhs.degree == 2
    assert [n.kind for n in (expr.lhs, expr.lhs.children[0], expr.lhs.children[0].children[0])] == [
        "fixed_op", "tn_layer", "input"]
    # L2 on a single triangle is multiplication by 3
    np.testing.assert_array_equal(expr.target.values, [[9.0]])


def test_build_degree_mismatch_names_link(filled_triangle):
    f = cochain_new(filled_triangle, 1, np.ones((3, 1)))
    with pytest.raises(ChainDegreeError, match=r"TN\[L0\].*degree 1"):
        build_expression("TN[L0](x)", filled_triangle, {"x": f})
    with pytest.raises(ChainDegreeError, match="d0"):
        build_expression("d1(d0(x))", filled_triangle, {"x": f})
    with pytest.raises(ChainDegreeError):
        build_expression("d5(x)", filled_triangle, {"x": f})
    with pytest.raises(ChainDegreeError, match="right side"):
        build_expression("L1(x) = L0(y)", filled_triangle,
                         {"x": f, "y": cochain_new(filled_triangle, 0, np.ones((3, 1)))})


def test_build_rejects_unknown_names(filled_triangle):
    f = cochain_new(filled_triangle, 0, np.ones((3, 1)))
    with pytest.raises(ExpressionError):
        build_expression("Q7(x)", filled_triangle, {"x": f})
    with pytest.raises(ExpressionError):
        build_expression("d0(y)", filled_triangle, {"x": f})
    with pytest.raises(ExpressionError):
        build_expression("d0(x) = TN[d0](x)", filled_triangle, {"x": f})


def test_single_leaf_is_identity(path_graph):
    f = cochain_new(path_graph, 0, [[1.0], [2.0], [3.0]])
    expr = build_expression("x", path_graph, {"x": f})
    assert expr.kind == "input"
    assert evaluate(expr, {"x": f}).values.tolist() == f.values.tolist()


def test_user_operator_in_expression(filled_triangle):
    K = filled_triangle
    B = block_operator(K, {(0, 0): hodge_laplacian(K, 0), (2, 2): hodge_laplacian(K, 2)})
    f = Cochain(K, "mixed", np.arange(7.0)[:, None])
    expr = build_expression("TN[B](x)", K, {"x": f}, operators={"B": B})
    out = evaluate(expr, {"x": f}, [np.eye(1)])
    np.testing.assert_array_equal(out.values, apply(B, f).values)


def test_dd_annihilates_exactly(filled_triangle):
    K = filled_triangle
    rng = np.random.default_rng(1)
    for _ in range(20):
        f = cochain_new(K, 0, rng.normal(size=(3, 2)) * 10 ** rng.uniform(-3, 3))
        g = cochain_new(K, 2, rng.normal(size=(1, 2)))
        expr = build_expression("d1(TN[d0](x)) = L2(g)", K, {"x": f, "g": g})
        W = [rng.normal(size=(2, 2))]
        assert np.all(evaluate(expr, {"x": f, "g": g}, W).values == 0.0)
        # unfused evaluation differs only by rounding
        assert np.max(np.abs(evaluate(expr, {"x": f, "g": g}, W, fuse=False).values)) < 1e-9 * max(1, np.abs(f.values).max())


def test_train_dd_constant_loss(filled_triangle):
    K = filled_triangle
    f = cochain_new(K, 0, [[0.3], [-1.2], [2.0]])
    g = cochain_new(K, 2, [[1.7]])
    expr = build_expression("d1(TN[d0](x)) = L2(g)", K, {"x": f, "g": g})
    target = np.sum(apply(hodge_laplacian(K, 2), g).values ** 2)
    _, hist = train_expression(expr, {"x": f, "g": g}, TrainConfig(lr=0.1, max_iter=50))
    assert len(hist) == 51
    assert all(h == hist[0] for h in hist)
    assert abs(hist[0] - target) < 1e-12


def test_train_identity_least_squares(path_graph):
    rng = np.random.default_rng(2)
    f = cochain_new(path_graph, 0, rng.normal(size=(3, 2)))
    g = cochain_new(path_graph, 0, rng.normal(size=(3, 1)))
    expr = with_target(build_expression("TN[I](x)", path_graph, {"x": f}), g)
    assert expr.lhs.channels == 1
    W_star = np.linalg.solve(f.values.T @ f.values, f.values.T @ g.values)
    lam = np.linalg.eigvalsh(2 * f.values.T @ f.values).max()
    weights, hist = train_expression(expr, {"x": f}, TrainConfig(lr=1.0 / lam, max_iter=20000, tol=1e-20))
    np.testing.assert_allclose(weights[0], W_star, atol=1e-6)
    assert all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))


def test_zero_learning_rate(path_graph):
    f = cochain_new(path_graph, 0, [[1.0], [2.0], [3.0]])
    g = cochain_new(path_graph, 0, [[0.0], [1.0], [0.0]])
    expr = build_expression("TN[L0](x) = g", path_graph, {"x": f, "g": g})
    _, hist = train_expression(expr, {"x": f, "g": g}, TrainConfig(lr=0.0, max_iter=10))
    assert len(set(hist)) == 1


def test_training_is_deterministic(filled_triangle):
    rng = np.random.default_rng(4)
    K = filled_triangle
    x = cochain_new(K, 1, rng.normal(size=(3, 2)))
    g = cochain_new(K, 1, rng.normal(size=(3, 2)))
    expr = build_expression("TN[L1](TN[d0](TN[b1](x))) = g", K, {"x": x, "g": g}, activation="tanh")
    cfg = TrainConfig(lr=0.05, momentum=0.5, max_iter=100, seed=9)
    w1, h1 = train_expression(expr, {"x": x, "g": g}, cfg)
    w2, h2 = train_expression(expr, {"x": x, "g": g}, cfg)
    assert h1 == h2
    assert all(a.tobytes() == b.tobytes() for a, b in zip(w1, w2))
    assert h1[-1] < h1[0]


def test_init_weights_scale(filled_triangle):
    x = cochain_new(filled_triangle, 0, np.ones((3, 4)))
    expr = build_expression("TN[L1:6](TN[d0:3](x))", filled_triangle, {"x": x})
    w = init_weights(expr, seed=0)
    assert [a.shape for a in w] == [(4, 3), (3, 6)]
    assert np.abs(w[0]).max() <= 0.5 and np.abs(w[1]).max() <= 1 / np.sqrt(3)


@pytest.mark.parametrize("act", ["identity", "tanh", "sigmoid"])
def test_expression_gradient_matches_fd(filled_triangle, act):
    rng = np.random.default_rng(12)
    K = filled_triangle
    x = cochain_new(K, 0, rng.normal(size=(3, 2)))
    g = cochain_new(K, 1, rng.normal(size=(3, 3)))
    expr = build_expression("L1(TN[L1:3](d0(TN[L0:2](x)))) = g", K, {"x": x, "g": g}, activation=act)
    weights = init_weights(expr, seed=5)
    shapes = [w.shape for w in weights]
    cut = weights[0].size

    def unpack(t):
        return [t[:cut].reshape(shapes[0]), t[cut:].reshape(shapes[1])]

    for fuse in (True, False):
        obj = Objective(lambda t: expression_loss(expr, {"x": x, "g": g}, unpack(t), fuse),
                        lambda t: np.concatenate([a.ravel() for a in expression_gradients(expr, {"x": x, "g": g}, unpack(t), fuse)]))
        theta = np.concatenate([w.ravel() for w in weights])
        assert finite_difference_check(obj, theta) < 1e-5


def test_training_needs_target(path_graph):
    f = cochain_new(path_graph, 0, np.ones((3, 1)))
    expr = build_expression("TN[L0](x)", path_graph, {"x": f})
    with pytest.raises(ExpressionError):
        train_expression(expr, {"x": f}, TrainConfig())
    with pytest.raises(ChainDegreeError):
        with_target(expr, cochain_new(path_graph, 1, np.ones((2, 1))))
