"""Self-attention maps and their Lipschitz bounds.

Three attention mechanisms over a token matrix ``X`` of shape (D, N), where
column ``x_i`` is one token:

* dot-product attention (DPA): scores q_i . k_j scaled by 1/sqrt(D/H); its
  Lipschitz constant is unbounded, so the analytic bound is +inf.
* L2 attention (L2A): scores are negative squared distances between queries
  and keys, scaled by 1/sqrt(D/H); with tied query and key weights it admits
  a finite bound built around the inverse of phi(x) = x exp(x + 1).
* scaled cosine-similarity attention (SCSA): queries, keys and values are
  column-normalized with smoothing eps before the score product; the bound
  grows with N but is always finite.

Scores are turned into weights with a column softmax, so every weight column
sums to one and each head's output is a convex combination of its value
vectors.  Multi-head maps concatenate per-head outputs along the feature
axis; per-head bounds are combined as sqrt(H) * max over heads, which is
sound for the concatenation but goes beyond what the single-head analysis
covers, so reports flag it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .linalg import ShapeError, operator_norm

__all__ = [
    "AttentionKind",
    "AttentionParams",
    "NonFiniteValues",
    "attn_forward",
    "attn_lip_bound",
    "attn_jvp_numeric",
    "phi",
    "phi_inverse",
]

# Bisection bracket and tolerance for inverting phi(x) = x exp(x + 1).
_PHI_BRACKET = (1e-12, 50.0)
_PHI_TOL = 1e-10


class NonFiniteValues(ArithmeticError):
    """Raised when a forward pass produces NaN or infinite values."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(message)
        self.where = where


class AttentionKind(enum.Enum):
    DPA = "dpa"
    L2A = "l2a"
    SCSA = "scsa"

    @classmethod
    def from_string(cls, name: str) -> "AttentionKind":
        for kind in cls:
            if kind.value == name.lower():
                return kind
        valid = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown attention kind {name!r}; expected: {valid}")


@dataclass
class AttentionParams:
    """Per-head projection weights plus the SCSA shape parameters.

    ``w_q``, ``w_k`` and ``w_v`` have shape (H, D/H, D): one projection per
    head, mapping the model dimension D down to the head dimension D/H.
    ``nu`` (value scale), ``tau`` (score temperature) and ``eps`` (smoothing
    of the column normalization) only affect SCSA.
    """

    kind: AttentionKind
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    nu: float = 1.0
    tau: float = 5.0
    eps: float = 1e-5

    def __post_init__(self):
        self.w_q = np.asarray(self.w_q, dtype=np.float64)
        self.w_k = np.asarray(self.w_k, dtype=np.float64)
        self.w_v = np.asarray(self.w_v, dtype=np.float64)
        for name, w in (("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v)):
            if w.ndim != 3:
                raise ShapeError(
                    f"{name} must have shape (heads, head_dim, model_dim), "
                    f"got {w.shape}"
                )
            if w.shape != self.w_q.shape:
                raise ShapeError("w_q, w_k and w_v must share one shape")
        heads, head_dim, model_dim = self.w_q.shape
        if heads * head_dim != model_dim:
            raise ShapeError(
                f"heads * head_dim must equal model_dim, got "
                f"{heads} * {head_dim} != {model_dim}"
            )
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def heads(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.w_q.shape[1]

    @property
    def model_dim(self) -> int:
        return self.w_q.shape[2]


def _softmax_columns(scores: np.ndarray) -> np.ndarray:
    """Column-stochastic softmax, stabilized by a per-column shift."""
    shifted = scores - scores.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def _smooth_normalize_columns(m: np.ndarray, eps: float) -> np.ndarray:
    norms = np.sqrt(np.sum(m * m, axis=0) + eps)
    return m / norms[None, :]


def attn_forward(
    params: AttentionParams,
    x: np.ndarray,
    allow_nonfinite: bool = False,
) -> np.ndarray:
    """Apply the attention map to a (D, N) token matrix.

    Non-finite attention scores raise :class:`NonFiniteValues` unless
    ``allow_nonfinite`` is set, in which case they propagate into the output
    for the caller's overflow accounting.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != params.model_dim:
        raise ShapeError(
            f"expected a ({params.model_dim}, N) token matrix, got {x.shape}"
        )
    outputs = []
    scale = 1.0 / math.sqrt(params.head_dim)
    for h in range(params.heads):
        q = params.w_q[h] @ x
        k = params.w_k[h] @ x
        v = params.w_v[h] @ x
        if params.kind == AttentionKind.DPA:
            scores = scale * (q.T @ k)
        elif params.kind == AttentionKind.L2A:
            sq_q = np.sum(q * q, axis=0)
            sq_k = np.sum(k * k, axis=0)
            dist2 = sq_q[:, None] + sq_k[None, :] - 2.0 * (q.T @ k)
            scores = -scale * dist2
        else:
            q = _smooth_normalize_columns(q, params.eps)
            k = _smooth_normalize_columns(k, params.eps)
            v = params.nu * _smooth_normalize_columns(v, params.eps)
            scores = params.tau * (q.T @ k)
        if not allow_nonfinite and not np.all(np.isfinite(scores)):
            raise NonFiniteValues(
                "attention scores are not finite", where="attention-scores"
            )
        weights = _softmax_columns(scores)
        outputs.append(v @ weights)
    return np.concatenate(outputs, axis=0)


def phi(x: np.ndarray | float) -> np.ndarray | float:
    """The function x * exp(x + 1) from the tied-weight L2A bound."""
    return x * np.exp(x + 1.0)


def phi_inverse(target: float, tol: float = _PHI_TOL) -> float:
    """Invert phi on [0, inf) by bisection.

    phi is strictly increasing there, so the root is unique.  Targets at or
    below phi's value at the lower bracket edge return 0; targets above the
    upper edge raise, because the bracket [1e-12, 50] comfortably covers
    every token count this package handles.
    """
    if target < 0.0:
        raise ValueError(f"phi_inverse needs a nonnegative target, got {target}")
    lo, hi = _PHI_BRACKET
    if target <= phi(lo):
        return 0.0
    if target > phi(hi):
        raise ValueError(
            f"target {target} exceeds phi({hi}); bracket too small"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phi(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _head_bound(params: AttentionParams, head: int, n_tokens: int) -> float:
    if params.kind == AttentionKind.DPA:
        return math.inf
    if params.kind == AttentionKind.L2A:
        if not np.array_equal(params.w_q[head], params.w_k[head]):
            return math.inf
        sigma_q = operator_norm(params.w_q[head])
        sigma_v = operator_norm(params.w_v[head])
        factor = 4.0 * phi_inverse(float(n_tokens - 1)) + 1.0
        return (
            math.sqrt(n_tokens)
            / math.sqrt(params.head_dim)
            * factor
            * math.sqrt(sigma_q**2 * sigma_v**2)
        )
    sigma_q = operator_norm(params.w_q[head])
    sigma_k = operator_norm(params.w_k[head])
    sigma_v = operator_norm(params.w_v[head])
    root_eps = 1.0 / math.sqrt(params.eps)
    n = float(n_tokens)
    return (
        2.0 * n * (n - 1.0) * params.nu * params.tau * root_eps * sigma_k
        + 2.0 * (n - 1.0) * params.nu * params.tau * root_eps * sigma_q
        + 2.0 * n * params.nu * root_eps * sigma_v
    )


def attn_lip_bound(params: AttentionParams, n_tokens: int) -> float:
    """Analytic L2 Lipschitz bound of the attention map on N tokens.

    DPA returns +inf (its constant is unbounded).  L2A returns +inf unless
    query and key weights are tied exactly.  Multi-head values combine the
    per-head bounds as sqrt(H) * max; callers composing reports flag heads
    above one as heuristic since the underlying analysis is single-head.
    """
    if n_tokens < 1:
        raise ValueError(f"token count must be at least 1, got {n_tokens}")
    per_head = [
        _head_bound(params, h, n_tokens) for h in range(params.heads)
    ]
    worst = max(per_head)
    if math.isinf(worst):
        return math.inf
    return math.sqrt(params.heads) * worst


def attn_jvp_numeric(
    params: AttentionParams,
    x: np.ndarray,
    direction: np.ndarray,
    step: float = 1e-6,
) -> np.ndarray:
    """Central-difference directional derivative of the attention map.

    Attention Jacobians in this package are probed numerically rather than
    materialized analytically; this helper is the single point where that
    happens.
    """
    x = np.asarray(x, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != x.shape:
        raise ShapeError(
            f"direction shape {direction.shape} must match input {x.shape}"
        )
    plus = attn_forward(params, x + step * direction)
    minus = attn_forward(params, x - step * direction)
    return (plus - minus) / (2.0 * step)
