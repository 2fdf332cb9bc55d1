"""Cochains on simplicial complexes, discrete exterior calculus operators,
topological network layers, and structure-preserving embedding losses."""

from .complex import (
    Chain,
    Cochain,
    SimplicialComplex,
    build_complex,
    cochain_new,
    concat_cochains,
    euler_characteristic,
    skeleton_counts,
    split_cochain,
)
from .dec import (
    SparseOperator,
    apply,
    betti_numbers,
    block_operator,
    boundary_matrix,
    coboundary_matrix,
    exact_rank,
    graph_laplacian,
    hodge_laplacian,
    identity_operator,
)
from .errors import (
    BandwidthError,
    BlockShapeError,
    ChainDegreeError,
    DegreeError,
    DimensionError,
    DivergenceError,
    ExpressionError,
    InfiniteMismatchError,
    InvalidSimplex,
    UnsupportedDimension,
)
from .optim import Objective, TrainConfig, finite_difference_check, gradient_descent
from .persistence import (
    bottleneck_distance,
    compute_persistence,
    critical_edges,
    diagram_distance,
    persistent_homology,
    vietoris_rips,
)
from .structloss import (
    distance_matrix,
    embed,
    kl_loss,
    low_dim_affinities,
    mds_gradient,
    mds_loss,
    ph_gradient,
    ph_loss,
    tsne_affinities,
    tsne_gradient,
)
from .topnet import (
    Neighborhood,
    TNLayer,
    build_expression,
    evaluate,
    message_passing_forward,
    parse_expression,
    tn_forward,
    tn_gradients,
    train_expression,
)

__version__ = "0.1.0"
