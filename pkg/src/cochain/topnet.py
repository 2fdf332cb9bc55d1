"""Topological network layers ``f -> phi(A f W)`` and expressions built from them.

``A`` is a fixed sparse operator on cochains, ``W`` mixes channels (it
multiplies the ``n x c_in`` cochain matrix on the right) and ``phi`` is applied
elementwise. With ``W = I`` and ``phi = identity`` a layer is plain operator
application.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .complex import Cochain, SimplicialComplex
from .dec import (
    SparseOperator,
    adjacency_matrix,
    apply,
    boundary_matrix,
    coboundary_matrix,
    graph_laplacian,
    hodge_laplacian,
    identity_operator,
)
from .errors import ChainDegreeError, DegreeError, DimensionError, ExpressionError
from .optim import Objective, TrainConfig, gradient_descent

__all__ = [
    "ACTIVATIONS",
    "TNLayer",
    "tn_forward",
    "tn_gradients",
    "Neighborhood",
    "message_passing_forward",
    "ExpressionNode",
    "parse_expression",
    "build_expression",
    "init_weights",
    "evaluate",
    "expression_loss",
    "expression_gradients",
    "train_expression",
]


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    # subgradient 0 at the kink
    return (x > 0).astype(float)


def _tanh_grad(x):
    return 1.0 - np.tanh(x) ** 2


def _sigmoid_grad(x):
    s = expit(x)
    return s * (1.0 - s)


ACTIVATIONS = {
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "sigmoid": (expit, _sigmoid_grad),
}


def _activation(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


@dataclass(frozen=True, eq=False)
class TNLayer:
    operator: SparseOperator
    weight: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        W = np.array(self.weight, dtype=float)
        if W.ndim != 2:
            raise DimensionError(f"weight must be a c_in x c_out matrix, got shape {W.shape}")
        _activation(self.activation)
        object.__setattr__(self, "weight", W)

    @property
    def c_in(self) -> int:
        return self.weight.shape[0]

    @property
    def c_out(self) -> int:
        return self.weight.shape[1]


def _check_layer_input(layer: TNLayer, f: Cochain):
    if f.channels != layer.c_in:
        raise DimensionError(f"layer expects {layer.c_in} channels, cochain has {f.channels}")


def tn_forward(layer: TNLayer, f: Cochain) -> Cochain:
    _check_layer_input(layer, f)
    Af = apply(layer.operator, f)
    phi, _ = _activation(layer.activation)
    return Af.with_values(phi(Af.values @ layer.weight))


def _tn_backward(A, W, act, x, upstream):
    """Return (grad_W, grad_x) for out = act(A x W)."""
    Z = A @ x
    P = Z @ W
    _, dphi = _activation(act)
    delta = upstream * dphi(P)
    return Z.T @ delta, A.T @ (delta @ W.T)


def tn_gradients(layer: TNLayer, f: Cochain, upstream) -> tuple[np.ndarray, Cochain]:
    """Gradients of ``<upstream, tn_forward(layer, f)>`` w.r.t. the weight and ``f``."""
    _check_layer_input(layer, f)
    if f.degree != layer.operator.domain[1]:
        raise DimensionError(f"layer acts on degree {layer.operator.domain[1]}, got {f.degree}")
    up = np.asarray(getattr(upstream, "values", upstream), dtype=float)
    if up.shape != (layer.operator.rows, layer.c_out):
        raise DimensionError(f"upstream gradient has shape {up.shape}, expected {(layer.operator.rows, layer.c_out)}")
    gW, gx = _tn_backward(layer.operator.matrix, layer.weight, layer.activation, f.values, up)
    return gW, f.with_values(gx)


# --- message passing form ---------------------------------------------------------

@dataclass(frozen=True)
class Neighborhood:
    """For each target simplex, the (source simplex, coefficient) pairs sending it messages."""

    incoming: tuple[tuple[tuple[int, float], ...], ...]
    domain: tuple
    codomain: tuple
    n_sources: int

    @classmethod
    def from_operator(cls, A: SparseOperator) -> "Neighborhood":
        M = A.matrix
        incoming = tuple(
            tuple((int(M.indices[p]), float(M.data[p])) for p in range(M.indptr[i], M.indptr[i + 1]))
            for i in range(M.shape[0])
        )
        return cls(incoming, A.domain, A.codomain, M.shape[1])


def message_passing_forward(K: SimplicialComplex, neighborhood: Neighborhood, f: Cochain,
                            weight=None, activation: str = "identity") -> Cochain:
    """Evaluate a TN layer by explicit per-simplex message accumulation.

    Each target simplex sums ``coeff * f[source]`` over its incoming messages,
    then the update multiplies by ``weight`` and applies the activation.
    """
    if (f.complex.uid, f.degree) != neighborhood.domain or len(f) != neighborhood.n_sources:
        raise DimensionError("cochain does not live on the neighborhood's source simplices")
    c = f.channels
    W = np.eye(c) if weight is None else np.asarray(weight, dtype=float)
    phi, _ = _activation(activation)
    x = f.values
    out = np.zeros((len(neighborhood.incoming), W.shape[1]))
    for i, msgs in enumerate(neighborhood.incoming):
        m = np.zeros(c)
        for j, coeff in msgs:
            m += coeff * x[j]
        out[i] = phi(m @ W)
    return Cochain(K, neighborhood.codomain[1], out)


# --- expressions ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z_0-9]*)|(\d+)|(\S))")


def _tokenize(text: str):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionError(f"cannot tokenize {text[pos:]!r}")
        out.append(m.group(1) or m.group(2) or m.group(3))
        pos = m.end()
    return out


def parse_expression(text: str):
    """Parse the expression mini-grammar into a nested-tuple syntax tree.

    Grammar::

        equation := term [ "=" term ]
        term     := NAME | OP "(" term ")" | "TN" "[" OP [":" INT] "]" "(" term ")"
        OP       := d<k> | b<k> | L<k> | I | A | G | any user-supplied operator name

    ``d<k>`` is the exterior derivative on k-cochains, ``b<k>`` the k-th
    boundary, ``L<k>`` the k-th Hodge Laplacian, ``I`` the identity, ``A`` the
    vertex adjacency and ``G`` the graph Laplacian (D - A). ``TN[op:c]`` gives
    the layer ``c`` output channels.

    Trees are ``("var", name)``, ``("op", name, child)``,
    ``("tn", opname, c_out or None, child)`` and ``("eq", lhs, rhs)``.
    """
    toks = _tokenize(text)
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else None

    def expect(tok):
        nonlocal pos
        if peek() != tok:
            raise ExpressionError(f"expected {tok!r} at token {pos} of {text!r}, got {peek()!r}")
        pos += 1

    def name():
        nonlocal pos
        tok = peek()
        if tok is None or not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", tok):
            raise ExpressionError(f"expected a name at token {pos} of {text!r}, got {tok!r}")
        pos += 1
        return tok

    def term():
        nonlocal pos
        head = name()
        if head == "TN":
            expect("[")
            op = name()
            cout = None
            if peek() == ":":
                pos += 1
                tok = peek()
                if tok is None or not tok.isdigit() or int(tok) < 1:
                    raise ExpressionError(f"bad channel count {tok!r} in {text!r}")
                cout = int(tok)
                pos += 1
            expect("]")
            expect("(")
            child = term()
            expect(")")
            return ("tn", op, cout, child)
        if peek() == "(":
            pos += 1
            child = term()
            expect(")")
            return ("op", head, child)
        return ("var", head)

    if not toks:
        raise ExpressionError("empty expression")
    lhs = term()
    if peek() == "=":
        pos += 1
        rhs = term()
        tree = ("eq", lhs, rhs)
    else:
        tree = lhs
    if pos != len(toks):
        raise ExpressionError(f"unexpected trailing input {' '.join(toks[pos:])!r} in {text!r}")
    return tree


@dataclass(eq=False)
class ExpressionNode:
    """Typed node of a cochain expression.

    ``kind`` is one of ``input``, ``fixed_op``, ``tn_layer`` or
    ``residual_target``. A residual node has the left-hand side as its single
    child and stores the fixed right-hand side in ``target``; training it
    minimizes the squared Frobenius norm of ``lhs - target``.
    """

    kind: str
    children: list = field(default_factory=list)
    label: str = ""
    operator: SparseOperator | None = None
    activation: str = "identity"
    c_in: int | None = None
    degree: int | str | None = None
    channels: int | None = None
    slot: int | None = None
    target: Cochain | None = None

    def __repr__(self):
        return self.describe()

    def describe(self) -> str:
        if self.kind == "input":
            return self.label
        if self.kind == "fixed_op":
            return f"{self.label}({self.children[0].describe()})"
        if self.kind == "tn_layer":
            return f"TN[{self.label}]({self.children[0].describe()})"
        return f"{self.children[0].describe()} = {self.label}"

    @property
    def lhs(self) -> "ExpressionNode":
        return self.children[0] if self.kind == "residual_target" else self

    def tn_nodes(self) -> list["ExpressionNode"]:
        out = []
        for c in self.children:
            out += c.tn_nodes()
        if self.kind == "tn_layer":
            out.append(self)
        return out


def _named_operator(K: SimplicialComplex, name: str, in_degree, operators) -> SparseOperator:
    if operators and name in operators:
        return operators[name]
    m = re.fullmatch(r"([dbL])(\d+)", name)
    try:
        if m:
            kind, k = m.group(1), int(m.group(2))
            return {"d": coboundary_matrix, "b": boundary_matrix, "L": hodge_laplacian}[kind](K, k)
        if name == "I":
            return identity_operator(K, in_degree)
        if name == "A":
            return adjacency_matrix(K)
        if name == "G":
            return graph_laplacian(K)
    except DegreeError as exc:
        raise ChainDegreeError(f"operator {name}: {exc}") from exc
    raise ExpressionError(f"unknown operator {name!r}")


def _build(tree, K, inputs, operators, slots, allow_tn=True):
    tag = tree[0]
    if tag == "var":
        name = tree[1]
        if name not in inputs:
            raise ExpressionError(f"no input cochain named {name!r}")
        f = inputs[name]
        return ExpressionNode("input", label=name, degree=f.degree, channels=f.channels)
    if tag == "eq":
        raise ExpressionError("'=' may only appear once, at the top level")
    child = _build(tree[-1], K, inputs, operators, slots, allow_tn)
    opname = tree[1]
    A = _named_operator(K, opname, child.degree, operators)
    if A.domain[0] != K.uid:
        raise ExpressionError(f"operator {opname} belongs to a different complex")
    if A.domain[1] != child.degree:
        where = f"TN[{opname}]" if tag == "tn" else opname
        raise ChainDegreeError(
            f"{where} acts on degree {A.domain[1]} cochains but its argument "
            f"{child.describe()} has degree {child.degree}"
        )
    if tag == "op":
        return ExpressionNode("fixed_op", [child], opname, A, degree=A.codomain[1], channels=child.channels)
    if not allow_tn:
        raise ExpressionError("the right-hand side of an equation must not contain TN layers")
    node = ExpressionNode("tn_layer", [child], opname, A, c_in=child.channels,
                          degree=A.codomain[1], channels=tree[2], slot=len(slots))
    slots.append(node)
    return node


def build_expression(description, K: SimplicialComplex, inputs: dict[str, Cochain],
                     activation: str = "identity", operators: dict | None = None) -> ExpressionNode:
    """Type-check an expression against a complex and named input cochains.

    ``description`` is a mini-grammar string (see :func:`parse_expression`)
    or an already parsed tree. ``activation`` is used by every TN layer.
    ``operators`` adds named operators (e.g. block operators on the whole
    complex) to the built-in ones.

    Raises ChainDegreeError naming the first (innermost) link whose degrees
    do not match.
    """
    _activation(activation)
    tree = parse_expression(description) if isinstance(description, str) else description
    slots: list = []
    if tree[0] == "eq":
        lhs = _build(tree[1], K, inputs, operators, slots)
        rhs = _build(tree[2], K, inputs, operators, [], allow_tn=False)
        target = _evaluate_fixed(rhs, inputs)
        if rhs.degree != lhs.degree:
            raise ChainDegreeError(
                f"left side {lhs.describe()} has degree {lhs.degree} but right side "
                f"{rhs.describe()} has degree {rhs.degree}"
            )
        root = ExpressionNode("residual_target", [lhs], rhs.describe(), degree=lhs.degree,
                              channels=target.channels, target=target)
    else:
        root = _build(tree, K, inputs, operators, slots)
    # the outermost TN adapts its width to the target unless declared
    outer = _outermost_tn(root.lhs)
    if root.kind == "residual_target" and outer is not None and outer.channels is None:
        outer.channels = root.target.channels
    _propagate_channels(root.lhs)
    if root.kind == "residual_target" and root.lhs.channels != root.target.channels:
        raise ExpressionError(
            f"left side has {root.lhs.channels} channels, target has {root.target.channels}"
        )
    for node in slots:
        node.activation = activation
    return root


def _propagate_channels(node: ExpressionNode):
    """Resolve channel counts bottom-up; undeclared TN widths keep c_in."""
    for c in node.children:
        _propagate_channels(c)
    if node.kind == "tn_layer":
        node.c_in = node.children[0].channels
        if node.channels is None:
            node.channels = node.c_in
    elif node.kind == "fixed_op":
        node.channels = node.children[0].channels


def _outermost_tn(node: ExpressionNode):
    while node.kind != "tn_layer":
        if not node.children:
            return None
        node = node.children[0]
    return node


def _evaluate_fixed(node: ExpressionNode, inputs) -> Cochain:
    if node.kind == "input":
        return inputs[node.label]
    return apply(node.operator, _evaluate_fixed(node.children[0], inputs))


# --- evaluation and reverse-mode gradients ---------------------------------------------

def _fuse(node: ExpressionNode) -> ExpressionNode:
    """Fold fixed operators into adjacent operators and linear TN layers.

    ``B(TN_A(x)) = TN_{BA}(x)`` when the layer is linear, and
    ``TN_A(B(x)) = TN_{AB}(x)`` always. Sparse products of integer operators
    are exact, so e.g. ``d1 d0`` collapses to the zero matrix.
    """
    if node.kind in ("input",):
        return node
    child = _fuse(node.children[0])
    if node.kind == "residual_target":
        return replace(node, children=[child])
    if node.kind == "fixed_op":
        if child.kind == "fixed_op":
            return replace(node, operator=node.operator @ child.operator, children=child.children,
                           label=f"{node.label}*{child.label}")
        if child.kind == "tn_layer" and child.activation == "identity":
            return replace(child, operator=node.operator @ child.operator, degree=node.degree,
                           label=f"{node.label}*{child.label}")
        return replace(node, children=[child])
    if child.kind == "fixed_op":
        return replace(node, operator=node.operator @ child.operator, children=child.children,
                       label=f"{node.label}*{child.label}")
    return replace(node, children=[child])


def init_weights(expr: ExpressionNode, seed: int = 0) -> list[np.ndarray]:
    """Uniform weights in [-s, s] with s = 1/sqrt(c_in), one matrix per TN layer."""
    rng = np.random.default_rng(seed)
    out = []
    for node in sorted(expr.tn_nodes(), key=lambda n: n.slot):
        s = 1.0 / np.sqrt(node.c_in)
        out.append(rng.uniform(-s, s, size=(node.c_in, node.channels)))
    return out


def _forward(node, inputs, weights, tape):
    if node.kind == "input":
        return inputs[node.label].values
    x = _forward(node.children[0], inputs, weights, tape)
    if node.kind == "fixed_op":
        return node.operator.matrix @ x
    W = weights[node.slot]
    Z = node.operator.matrix @ x
    tape[id(node)] = x
    phi, _ = _activation(node.activation)
    return phi(Z @ W)


def _backward(node, grad_out, weights, tape, grads):
    if node.kind == "input":
        return
    if node.kind == "fixed_op":
        _backward(node.children[0], node.operator.matrix.T @ grad_out, weights, tape, grads)
        return
    gW, gx = _tn_backward(node.operator.matrix, weights[node.slot], node.activation,
                          tape[id(node)], grad_out)
    grads[node.slot] = grads[node.slot] + gW
    _backward(node.children[0], gx, weights, tape, grads)


def evaluate(expr: ExpressionNode, inputs: dict[str, Cochain], weights=None, fuse: bool = True) -> Cochain:
    """Value of the expression's left-hand side."""
    weights = init_weights(expr) if weights is None else weights
    lhs = expr.lhs
    plan = _fuse(lhs) if fuse else lhs
    K = next(iter(inputs.values())).complex
    return Cochain(K, lhs.degree, _forward(plan, inputs, weights, {}))


def _residual(expr):
    if expr.kind != "residual_target":
        raise ExpressionError("training needs an equation 'lhs = rhs' or an explicit target")
    return expr.target.values


def expression_loss(expr, inputs, weights, fuse: bool = True) -> float:
    target = _residual(expr)
    plan = _fuse(expr.lhs) if fuse else expr.lhs
    r = _forward(plan, inputs, weights, {}) - target
    return float(np.sum(r * r))


def expression_gradients(expr, inputs, weights, fuse: bool = True) -> list[np.ndarray]:
    target = _residual(expr)
    plan = _fuse(expr.lhs) if fuse else expr.lhs
    tape = {}
    out = _forward(plan, inputs, weights, tape)
    grads = [np.zeros_like(w) for w in weights]
    _backward(plan, 2.0 * (out - target), weights, tape, grads)
    return grads


def with_target(expr: ExpressionNode, target: Cochain) -> ExpressionNode:
    """Turn a plain expression into a residual one against a given cochain."""
    lhs = expr.lhs
    if target.degree != lhs.degree:
        raise ChainDegreeError(f"{lhs.describe()} has degree {lhs.degree}, target has degree {target.degree}")
    outer = _outermost_tn(lhs)
    if outer is not None and outer.channels != target.channels:
        outer.channels = target.channels
        _propagate_channels(lhs)
    if lhs.channels != target.channels:
        raise ExpressionError(f"left side has {lhs.channels} channels, target has {target.channels}")
    return ExpressionNode("residual_target", [lhs], "target", degree=lhs.degree,
                          channels=target.channels, target=target)


def train_expression(expr: ExpressionNode, inputs: dict[str, Cochain], hyper: TrainConfig,
                     weights=None, fuse: bool = True):
    """Fit the TN weights of a residual expression by gradient descent.

    Returns the trained weight matrices (in slot order) and the loss history.
    """
    _residual(expr)
    w0 = init_weights(expr, hyper.seed) if weights is None else [np.array(w, dtype=float) for w in weights]
    shapes = [w.shape for w in w0]
    sizes = [w.size for w in w0]
    cuts = np.cumsum(sizes)[:-1]

    def unpack(theta):
        return [p.reshape(s) for p, s in zip(np.split(theta, cuts), shapes)]

    def loss(theta):
        return expression_loss(expr, inputs, unpack(theta), fuse)

    def grad(theta):
        gs = expression_gradients(expr, inputs, unpack(theta), fuse)
        return np.concatenate([g.ravel() for g in gs]) if gs else np.zeros(0)

    theta0 = np.concatenate([w.ravel() for w in w0]) if w0 else np.zeros(0)
    theta, history = gradient_descent(Objective(loss, grad, theta0.size), theta0, hyper)
    return unpack(theta), history
