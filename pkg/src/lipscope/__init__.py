"""Lipschitz analysis of deep-learning layer maps.

The package is organized around one sandwich: a sampled lower view
K_s, the true local constant K, and an analytic upper view K_u, with
K_s <= K <= K_u whenever the bound machinery applies.  ``layers`` and
``attention`` supply forward maps, Jacobians, and per-layer bounds;
``networks`` assembles them into residual stacks; ``estimation`` owns
the sampling side and the bound composition; ``initializers``,
``optim``, and ``harness`` cover the surrounding experiments.
"""

from .attention import (
    AttentionKind,
    AttentionParams,
    NonFiniteValues,
    attn_forward,
    attn_lip_bound,
)
from .estimation import (
    BoundReport,
    EstimatorSettings,
    LayerwiseProfile,
    LipschitzEstimate,
    PrincipleReport,
    check_principles,
    compose_network_bound,
    droppath_bound,
    estimate_K,
    estimate_K_multi,
    estimate_layerwise,
    network_function,
    sandwich_check,
)
from .initializers import InitMethod, InitSpec, init_matrix, spectrum_report
from .layers import Layer, check_jacobian_fd, layer_lip_bound
from .linalg import (
    ConvergenceError,
    DegenerateInputError,
    NormKind,
    ShapeError,
    operator_norm,
    spectral_norm,
    vector_norm,
)
from .networks import (
    Family,
    Network,
    NetworkSpec,
    ResidualMode,
    build,
    net_forward,
    net_jacobian_product,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionKind",
    "AttentionParams",
    "BoundReport",
    "ConvergenceError",
    "DegenerateInputError",
    "EstimatorSettings",
    "Family",
    "InitMethod",
    "InitSpec",
    "Layer",
    "LayerwiseProfile",
    "LipschitzEstimate",
    "Network",
    "NetworkSpec",
    "NonFiniteValues",
    "NormKind",
    "PrincipleReport",
    "ResidualMode",
    "ShapeError",
    "attn_forward",
    "attn_lip_bound",
    "build",
    "check_jacobian_fd",
    "check_principles",
    "compose_network_bound",
    "droppath_bound",
    "estimate_K",
    "estimate_K_multi",
    "estimate_layerwise",
    "init_matrix",
    "layer_lip_bound",
    "net_forward",
    "net_jacobian_product",
    "network_function",
    "sandwich_check",
    "operator_norm",
    "spectral_norm",
    "spectrum_report",
    "vector_norm",
    "__version__",
]
