"""Cayley spectral graph filters with a learnable spectral zoom.

Complex rational transfer functions of a graph Laplacian, applied exactly
through factorized shifted solves or in linear time through truncated
Jacobi iterations, with reverse-mode gradients for training, a Chebyshev
polynomial baseline, and verifiers for the approximation error,
localization, and complexity guarantees.
"""

from .graphs import (
    CommunitySpec,
    Graph,
    GraphError,
    LaplacianKind,
    LaplacianOperator,
    bfs_distances,
    build_laplacian,
    estimate_lambda_max,
    generate_community_graph,
    generate_grid_graph,
    is_regular,
    k_hop_neighborhood,
    max_degree,
    read_graph,
    read_labels,
    write_graph,
    write_labels,
)
from .spectral import DenseSpectrum, apply_spectral_function, eigendecompose, graph_fourier
from .cayley import (
    CayleyFilter,
    DecayBoundError,
    DecayCertificate,
    DiagonalDominanceError,
    JacobiConfig,
    JacobiOperator,
    OpCounter,
    SupportLeakError,
    apply_cayley_exact,
    apply_cayley_jacobi,
    apply_cayley_spectral,
    cayley_transform,
    decay_certificate,
    eval_cayley_poly,
    jacobi_error_bound,
    jacobi_operator,
    jacobi_support,
    kappa,
)
from .chebyshev import ChebFilter, apply_cheb, cheb_T, eval_cheb_poly
from .gradients import (
    CayleyGradient,
    finite_diff,
    grad_exact,
    grad_exact_solves,
    grad_unrolled,
)
from .learn import (
    ExperimentResult,
    SpectralConvLayer,
    TrainConfig,
    TrainingDivergedError,
    generate_step_signals,
    layer_forward,
    optimizer_step,
    train_community,
)
from .bench import bench_jacobi_sweep, bench_scaling

__version__ = "0.1.0"
