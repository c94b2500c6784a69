"""Layer maps with matching analytic Jacobians and L2 Lipschitz bounds.

Each layer kind bundles three views of the same map: the forward function,
the Jacobian in denominator layout, and a global upper bound on its L2
Lipschitz constant.  Denominator layout means ``J[i, j] = d out_j / d in_i``,
so for ``y = W x`` the Jacobian is ``W.T`` and a chain of layers multiplies
left to right in forward order.  Jacobians of layers that act on images or
batches are expressed on the C-order flattening of their input and output
arrays.

Bounds are chosen to be sound for the L2 norm wherever possible; the two
data-dependent exceptions (train-mode batch normalization and overlapping
convolution windows) carry ``bound_is_heuristic`` flags that the bound
composition report surfaces as caveats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    DenseMatrix,
    ShapeError,
    Vector,
    as_matrix,
    as_vector,
    conv_output_side,
    im2col,
    operator_norm,
)

__all__ = [
    "WRS_CLAMP",
    "GELU_GATE_SCALE",
    "Layer",
    "Linear",
    "Conv2D",
    "Sigmoid",
    "Softmax",
    "ReLU",
    "GELU",
    "Swish",
    "LayerNorm",
    "BatchNorm",
    "RMSNorm",
    "CenterNorm",
    "WeightNorm",
    "FFN",
    "Residual",
    "WeightedResidual",
    "MaxPool",
    "AvgPool",
    "layer_forward",
    "layer_jacobian",
    "layer_lip_bound",
    "check_jacobian_fd",
    "JacobianCheck",
    "droppath_apply",
]

# Largest admissible per-channel residual weight magnitude; weighted
# residuals reject anything above this at construction time.
WRS_CLAMP = 2.0

# Gate sharpness of the sigmoid-approximated GELU.
GELU_GATE_SCALE = 1.702

# Global slope bounds of the smooth gated activations.  Both curves have a
# maximal derivative a little below 1.1 (GELU about 1.084, Swish about
# 1.0998), so 1.1 is a sound round constant.
_GELU_BOUND = 1.1
_SWISH_BOUND = 1.1


def _stable_sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t, dtype=np.float64)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax_1d(t: np.ndarray) -> np.ndarray:
    shifted = t - np.max(t)
    e = np.exp(shifted)
    return e / np.sum(e)


class Layer:
    """Common interface: a differentiable map with a global L2 bound."""

    #: True when lip_bound() is an approximation rather than a sound bound.
    bound_is_heuristic = False

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        """Jacobian at ``x`` in denominator layout, on flattened axes."""
        raise NotImplementedError

    def lip_bound(self) -> float:
        """Global upper bound on the L2 Lipschitz constant."""
        raise NotImplementedError


@dataclass
class Linear(Layer):
    """Affine map ``x -> W x + b``."""

    weight: DenseMatrix
    bias: Vector | None = None

    def __post_init__(self):
        self.weight = as_matrix(self.weight)
        if self.bias is not None:
            self.bias = as_vector(self.bias)
            if self.bias.shape[0] != self.weight.shape[0]:
                raise ShapeError(
                    f"bias length {self.bias.shape[0]} does not match "
                    f"weight rows {self.weight.shape[0]}"
                )

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_vector(x)
        y = self.weight @ x
        if self.bias is not None:
            y = y + self.bias
        return y

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        return self.weight.T.copy()

    def lip_bound(self) -> float:
        return operator_norm(self.weight)


@dataclass
class Conv2D(Layer):
    """2-D convolution expressed as ``im2col(x) @ w``.

    ``kernel`` holds the taps with shape ``(K, K, C, O)``; reshaping it to
    ``(K*K*C, O)`` gives the matrix that multiplies each flattened patch.
    The Lipschitz bound is the spectral norm of that patch matrix, which is
    the exact operator norm when windows do not overlap (stride >= kernel)
    and a per-patch heuristic otherwise.
    """

    kernel: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        if self.kernel.ndim != 4 or self.kernel.shape[0] != self.kernel.shape[1]:
            raise ShapeError(
                f"kernel must have shape (K, K, C, O), got {self.kernel.shape}"
            )
        if self.stride < 1 or self.padding < 0:
            raise ValueError(
                f"invalid stride/padding: {self.stride}/{self.padding}"
            )

    @property
    def bound_is_heuristic(self) -> bool:  # type: ignore[override]
        return self.stride < self.kernel.shape[0]

    def patch_matrix(self) -> DenseMatrix:
        k, _, c, o = self.kernel.shape
        return self.kernel.reshape(k * k * c, o)

    def output_shape(self, in_shape: tuple[int, int, int]) -> tuple[int, int, int]:
        h, w, c = in_shape
        k = self.kernel.shape[0]
        if c != self.kernel.shape[2]:
            raise ShapeError(
                f"input has {c} channels, kernel expects {self.kernel.shape[2]}"
            )
        return (
            conv_output_side(h, k, self.stride, self.padding),
            conv_output_side(w, k, self.stride, self.padding),
            self.kernel.shape[3],
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out_h, out_w, o = self.output_shape(x.shape)
        cols = im2col(x, self.kernel.shape[0], self.stride, self.padding)
        return (cols @ self.patch_matrix()).reshape(out_h, out_w, o)

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        x = np.asarray(x, dtype=np.float64)
        h, w, c = x.shape
        out_h, out_w, o = self.output_shape(x.shape)
        k = self.kernel.shape[0]
        jac = np.zeros((h * w * c, out_h * out_w * o))
        for oi in range(out_h):
            for oj in range(out_w):
                out_base = (oi * out_w + oj) * o
                for ki in range(k):
                    ii = oi * self.stride + ki - self.padding
                    if ii < 0 or ii >= h:
                        continue
                    for kj in range(k):
                        jj = oj * self.stride + kj - self.padding
                        if jj < 0 or jj >= w:
                            continue
                        in_base = (ii * w + jj) * c
                        jac[
                            in_base : in_base + c,
                            out_base : out_base + o,
                        ] += self.kernel[ki, kj]
        return jac

    def lip_bound(self) -> float:
        return operator_norm(self.patch_matrix())


@dataclass
class Sigmoid(Layer):
    """Elementwise logistic activation; slope is at most 1/4."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        return _stable_sigmoid(as_vector(x))

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        s = _stable_sigmoid(as_vector(x))
        return np.diag(s * (1.0 - s))

    def lip_bound(self) -> float:
        return 0.25


@dataclass
class Softmax(Layer):
    """Vector softmax; Jacobian is diag(y) - y y^T."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        return _softmax_1d(as_vector(x))

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        y = _softmax_1d(as_vector(x))
        return np.diag(y) - np.outer(y, y)

    def lip_bound(self) -> float:
        return 1.0


@dataclass
class ReLU(Layer):
    """Elementwise max(0, x); the kink at 0 takes derivative 0."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(as_vector(x), 0.0)

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        return np.diag((as_vector(x) > 0.0).astype(np.float64))

    def lip_bound(self) -> float:
        return 1.0


@dataclass
class GELU(Layer):
    """Sigmoid-gated GELU, x * sigmoid(1.702 x)."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_vector(x)
        return x * _stable_sigmoid(GELU_GATE_SCALE * x)

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        x = as_vector(x)
        s = _stable_sigmoid(GELU_GATE_SCALE * x)
        return np.diag(s + GELU_GATE_SCALE * x * s * (1.0 - s))

    def lip_bound(self) -> float:
        return _GELU_BOUND


@dataclass
class Swish(Layer):
    """Swish activation, x * sigmoid(x)."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_vector(x)
        return x * _stable_sigmoid(x)

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        x = as_vector(x)
        s = _stable_sigmoid(x)
        return np.diag(s + x * s * (1.0 - s))

    def lip_bound(self) -> float:
        return _SWISH_BOUND


def _centering_matrix(d: int) -> DenseMatrix:
    return np.eye(d) - np.full((d, d), 1.0 / d)


@dataclass
class LayerNorm(Layer):
    """Center, scale to unit (smoothed) norm, then apply gamma and beta.

    Forward: y = x - mean(x); z = y / sqrt(||y||^2 + eps); out = g*z + b.
    The bound max|gamma| / sqrt(eps) covers the worst case where the
    centered input collapses to zero norm.
    """

    gamma: Vector
    beta: Vector
    eps: float = 1e-5

    def __post_init__(self):
        self.gamma = as_vector(self.gamma)
        self.beta = as_vector(self.beta)
        if self.gamma.shape != self.beta.shape:
            raise ShapeError("gamma and beta must have the same length")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_vector(x)
        y = x - np.mean(x)
        z = y / math.sqrt(float(y @ y) + self.eps)
        return self.gamma * z + self.beta

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        x = as_vector(x)
        d = x.shape[0]
        y = x - np.mean(x)
        s = float(y @ y) + self.eps
        center = _centering_matrix(d)
        project = np.eye(d) - np.outer(y, y) / s
        return (center @ project) * (self.gamma / math.sqrt(s))

    def lip_bound(self) -> float:
        return float(np.max(np.abs(self.gamma))) / math.sqrt(self.eps)


@dataclass
class RMSNorm(Layer):
    """LayerNorm without the centering step."""

    gamma: Vector
    beta: Vector
    eps: float = 1e-5

    def __post_init__(self):
        self.gamma = as_vector(self.gamma)
        self.beta = as_vector(self.beta)
        if self.gamma.shape != self.beta.shape:
            raise ShapeError("gamma and beta must have the same length")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_vector(x)
        return self.gamma * (x / math.sqrt(float(x @ x) + self.eps)) + self.beta

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        x = as_vector(x)
        d = x.shape[0]
        s = float(x @ x) + self.eps
        project = np.eye(d) - np.outer(x, x) / s
        return project * (self.gamma / math.sqrt(s))

    def lip_bound(self) -> float:
        return float(np.max(np.abs(self.gamma))) / math.sqrt(self.eps)


@dataclass
class CenterNorm(Layer):
    """Centering with a D/(D-1) variance correction and affine output."""

    gamma: Vector
    beta: Vector

    def __post_init__(self):
        self.gamma = as_vector(self.gamma)
        self.beta = as_vector(self.beta)
        if self.gamma.shape != self.beta.shape:
            raise ShapeError("gamma and beta must have the same length")
        if self.gamma.shape[0] < 2:
            raise ShapeError("CenterNorm needs dimension at least 2")

    def _scale(self) -> float:
        d = self.gamma.shape[0]
        return d / (d - 1.0)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_vector(x)
        return self._scale() * self.gamma * (x - np.mean(x)) + self.beta

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        d = self.gamma.shape[0]
        return self._scale() * _centering_matrix(d) * self.gamma

    def lip_bound(self) -> float:
        return self._scale() * float(np.max(np.abs(self.gamma)))


@dataclass
class WeightNorm(Layer):
    """Linear map whose rows are rescaled to gamma-controlled norms.

    Row i of the effective weight is gamma_i * v_i / sqrt(||v_i||^2 + eps),
    so each row norm is at most |gamma_i| and the spectral norm is at most
    sqrt(sum gamma_i^2) regardless of the direction matrix V.
    """

    gamma: Vector
    v: DenseMatrix
    eps: float = 1e-5

    def __post_init__(self):
        self.gamma = as_vector(self.gamma)
        self.v = as_matrix(self.v)
        if self.gamma.shape[0] != self.v.shape[0]:
            raise ShapeError(
                f"gamma length {self.gamma.shape[0]} does not match "
                f"rows of v {self.v.shape[0]}"
            )
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    def effective_weight(self) -> DenseMatrix:
        row_norms = np.sqrt(np.sum(self.v * self.v, axis=1) + self.eps)
        return (self.gamma / row_norms)[:, None] * self.v

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.effective_weight() @ as_vector(x)

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        return self.effective_weight().T.copy()

    def lip_bound(self) -> float:
        return math.sqrt(float(self.gamma @ self.gamma))


@dataclass
class BatchNorm(Layer):
    """Per-feature standardization with affine output.

    Two modes:

    * ``"inference"``: standardize with the stored running statistics.  The
      map is elementwise per feature, so the Jacobian is diagonal and the
      bound max|gamma_d| / sqrt(var_d + eps) is exact.
    * ``"train"``: standardize with statistics of the input itself.  On a
      (D, N) batch the statistics run over the batch axis; on an (H, W, C)
      image the channels are the features and the spatial cells form the
      batch.  The Jacobian couples every cell that shares a feature.  The
      bound still uses the running statistics and is only an approximation,
      hence ``bound_is_heuristic``.

    1-D inputs are supported in inference mode only (a single vector has no
    batch to take statistics over).
    """

    gamma: Vector
    beta: Vector
    eps: float = 1e-5
    mode: str = "inference"
    running_mean: Vector | None = None
    running_var: Vector | None = None

    def __post_init__(self):
        self.gamma = as_vector(self.gamma)
        self.beta = as_vector(self.beta)
        if self.gamma.shape != self.beta.shape:
            raise ShapeError("gamma and beta must have the same length")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.mode not in ("inference", "train"):
            raise ValueError(f"unknown BatchNorm mode: {self.mode!r}")
        d = self.gamma.shape[0]
        if self.running_mean is None:
            self.running_mean = np.zeros(d)
        else:
            self.running_mean = as_vector(self.running_mean)
        if self.running_var is None:
            self.running_var = np.ones(d)
        else:
            self.running_var = as_vector(self.running_var)
        if self.running_mean.shape[0] != d or self.running_var.shape[0] != d:
            raise ShapeError("running statistics must match gamma length")

    @property
    def bound_is_heuristic(self) -> bool:  # type: ignore[override]
        return self.mode == "train"

    def _feature_axis_view(self, x: np.ndarray) -> tuple[np.ndarray, str]:
        """Return (features-by-batch matrix view, layout tag)."""
        d = self.gamma.shape[0]
        if x.ndim == 1:
            if x.shape[0] != d:
                raise ShapeError(f"expected {d} features, got {x.shape[0]}")
            return x[:, None], "vector"
        if x.ndim == 2:
            if x.shape[0] != d:
                raise ShapeError(
                    f"expected a ({d}, N) batch, got shape {x.shape}"
                )
            return x, "batch"
        if x.ndim == 3:
            if x.shape[2] != d:
                raise ShapeError(
                    f"expected an (H, W, {d}) image, got shape {x.shape}"
                )
            h, w, _ = x.shape
            return x.reshape(h * w, d).T, "image"
        raise ShapeError(f"unsupported BatchNorm input shape {x.shape}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        mat, layout = self._feature_axis_view(x)
        if self.mode == "inference":
            mean = self.running_mean
            var = self.running_var
        else:
            if layout == "vector":
                raise ShapeError(
                    "train-mode BatchNorm needs a batch or image input"
                )
            mean = mat.mean(axis=1)
            var = mat.var(axis=1)
        scaled = (mat - mean[:, None]) / np.sqrt(var + self.eps)[:, None]
        out = self.gamma[:, None] * scaled + self.beta[:, None]
        if layout == "vector":
            return out[:, 0]
        if layout == "image":
            h, w, _ = x.shape
            return out.T.reshape(h, w, self.gamma.shape[0])
        return out

    def _train_feature_block(self, row: np.ndarray) -> DenseMatrix:
        """Jacobian of one feature's standardized outputs w.r.t. its inputs."""
        n = row.shape[0]
        mean = row.mean()
        var = row.var()
        dev = row - mean
        d = math.sqrt(var + self.eps)
        block = (-(1.0 / n) * d - np.outer(dev, dev) / (n * d)) / (d * d)
        diag = ((1.0 - 1.0 / n) * d - dev * dev / (n * d)) / (d * d)
        np.fill_diagonal(block, diag)
        return block

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        x = np.asarray(x, dtype=np.float64)
        mat, layout = self._feature_axis_view(x)
        d_feat = self.gamma.shape[0]
        if self.mode == "inference":
            scale = self.gamma / np.sqrt(self.running_var + self.eps)
            if layout == "vector":
                return np.diag(scale)
            if layout == "batch":
                n = mat.shape[1]
                # C-order ravel of (D, N): index = feature * N + cell.
                return np.diag(np.repeat(scale, n))
            # Image: C-order ravel of (H, W, C): index = cell * C + channel.
            n = mat.shape[1]
            return np.diag(np.tile(scale, n))
        if layout == "vector":
            raise ShapeError("train-mode BatchNorm needs a batch or image input")
        n = mat.shape[1]
        jac = np.zeros((d_feat * n, d_feat * n))
        for j in range(d_feat):
            block = self.gamma[j] * self._train_feature_block(mat[j])
            if layout == "batch":
                idx = j * n + np.arange(n)
            else:
                idx = np.arange(n) * d_feat + j
            jac[np.ix_(idx, idx)] = block
        return jac

    def lip_bound(self) -> float:
        return float(
            np.max(np.abs(self.gamma) / np.sqrt(self.running_var + self.eps))
        )


@dataclass
class FFN(Layer):
    """Two-layer ReLU feed-forward block, W2 max(0, W1 x + b1) + b2."""

    w1: DenseMatrix
    b1: Vector
    w2: DenseMatrix
    b2: Vector

    def __post_init__(self):
        self.w1 = as_matrix(self.w1)
        self.w2 = as_matrix(self.w2)
        self.b1 = as_vector(self.b1)
        self.b2 = as_vector(self.b2)
        if self.w1.shape[0] != self.b1.shape[0]:
            raise ShapeError("b1 length must match rows of w1")
        if self.w2.shape[1] != self.w1.shape[0]:
            raise ShapeError("w2 columns must match rows of w1")
        if self.w2.shape[0] != self.b2.shape[0]:
            raise ShapeError("b2 length must match rows of w2")

    def forward(self, x: np.ndarray) -> np.ndarray:
        hidden = np.maximum(self.w1 @ as_vector(x) + self.b1, 0.0)
        return self.w2 @ hidden + self.b2

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        pre = self.w1 @ as_vector(x) + self.b1
        mask = (pre > 0.0).astype(np.float64)
        return (self.w1.T * mask) @ self.w2.T

    def lip_bound(self) -> float:
        return operator_norm(self.w1) * operator_norm(self.w2)


@dataclass
class Residual(Layer):
    """Shortcut around an inner layer, x -> x + f(x)."""

    inner: Layer

    @property
    def bound_is_heuristic(self) -> bool:  # type: ignore[override]
        return self.inner.bound_is_heuristic

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        fx = self.inner.forward(x)
        if fx.shape != x.shape:
            raise ShapeError(
                f"residual branch changed shape {x.shape} -> {fx.shape}"
            )
        return x + fx

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        inner = self.inner.jacobian(x)
        return np.eye(inner.shape[0]) + inner

    def lip_bound(self) -> float:
        return 1.0 + self.inner.lip_bound()


@dataclass
class WeightedResidual(Layer):
    """Channel-weighted shortcut, x -> x + nu * f(x).

    ``nu`` is clamped at construction: any |nu_d| above WRS_CLAMP (2.0) is
    rejected, matching the admissible range of the weighted-shortcut scheme.
    A scalar nu of 0 gives the ReZero variant.
    """

    inner: Layer
    nu: Vector

    def __post_init__(self):
        self.nu = as_vector(np.atleast_1d(np.asarray(self.nu, dtype=np.float64)))
        if np.any(np.abs(self.nu) > WRS_CLAMP):
            raise ValueError(
                f"residual weights must satisfy |nu| <= {WRS_CLAMP}, "
                f"got max |nu| = {np.max(np.abs(self.nu))}"
            )

    @property
    def bound_is_heuristic(self) -> bool:  # type: ignore[override]
        return self.inner.bound_is_heuristic

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_vector(x)
        fx = self.inner.forward(x)
        if fx.shape != x.shape:
            raise ShapeError(
                f"residual branch changed shape {x.shape} -> {fx.shape}"
            )
        return x + self.nu * fx

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        inner = self.inner.jacobian(x)
        return np.eye(inner.shape[0]) + inner * self.nu[None, :]

    def lip_bound(self) -> float:
        return 1.0 + float(np.max(np.abs(self.nu))) * self.inner.lip_bound()


@dataclass
class MaxPool(Layer):
    """Whole-vector max pooling; 1-Lipschitz under any p-norm."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ShapeError("pooling dimension must be at least 1")

    def _check(self, x: np.ndarray) -> Vector:
        x = as_vector(x)
        if x.shape[0] != self.dim:
            raise ShapeError(f"expected dimension {self.dim}, got {x.shape[0]}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.array([np.max(self._check(x))])

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        x = self._check(x)
        return (x == np.max(x)).astype(np.float64)[:, None]

    def lip_bound(self) -> float:
        return 1.0


@dataclass
class AvgPool(Layer):
    """Whole-vector mean pooling; its L2 constant is exactly 1/sqrt(D).

    The constant is attained by perturbations along the all-ones direction,
    and Cauchy-Schwarz shows no direction does better.
    """

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ShapeError("pooling dimension must be at least 1")

    def _check(self, x: np.ndarray) -> Vector:
        x = as_vector(x)
        if x.shape[0] != self.dim:
            raise ShapeError(f"expected dimension {self.dim}, got {x.shape[0]}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.array([np.mean(self._check(x))])

    def jacobian(self, x: np.ndarray) -> DenseMatrix:
        self._check(x)
        return np.full((self.dim, 1), 1.0 / self.dim)

    def lip_bound(self) -> float:
        return 1.0 / math.sqrt(self.dim)


def layer_forward(layer: Layer, x: np.ndarray) -> np.ndarray:
    """Apply ``layer`` to ``x``."""
    return layer.forward(x)


def layer_jacobian(layer: Layer, x: np.ndarray) -> DenseMatrix:
    """Jacobian of ``layer`` at ``x`` in denominator layout."""
    return layer.jacobian(x)


def layer_lip_bound(layer: Layer) -> float:
    """Global L2 Lipschitz upper bound of ``layer``."""
    return layer.lip_bound()


@dataclass
class JacobianCheck:
    """Result of comparing an analytic Jacobian against finite differences."""

    max_abs_err: float
    max_rel_err: float
    probes: int
    step: float

    @property
    def ok(self) -> bool:
        return self.max_rel_err < 1e-5


def check_jacobian_fd(
    layer: Layer,
    x: np.ndarray,
    probes: int = 10,
    step: float = 1e-6,
    seed: int = 0,
) -> JacobianCheck:
    """Probe the analytic Jacobian with central finite differences.

    For each random unit direction d the analytic directional derivative
    ``J.T @ d`` is compared against ``(f(x + h d) - f(x - h d)) / 2h``.  The
    relative error normalizes by the largest finite-difference entry, with a
    floor so that maps with an exactly zero response still compare cleanly.
    """
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    jac = layer.jacobian(x)
    max_abs = 0.0
    max_rel = 0.0
    for _ in range(probes):
        d = rng.standard_normal(x.shape)
        d /= np.linalg.norm(d)
        plus = layer.forward(x + step * d)
        minus = layer.forward(x - step * d)
        fd = (np.asarray(plus) - np.asarray(minus)).ravel() / (2.0 * step)
        analytic = jac.T @ d.ravel()
        diff = float(np.max(np.abs(analytic - fd)))
        scale = float(np.max(np.abs(fd)))
        max_abs = max(max_abs, diff)
        max_rel = max(max_rel, diff / max(scale, 1e-12))
    return JacobianCheck(
        max_abs_err=max_abs, max_rel_err=max_rel, probes=probes, step=step
    )


def droppath_apply(
    layer: Layer,
    x: np.ndarray,
    p: float,
    seed: int,
    rho: float = 1.0,
) -> np.ndarray:
    """Stochastic-depth residual: x with probability p, else x + rho f(x)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"drop probability must lie in [0, 1], got {p}")
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if rng.random() < p:
        return x.copy()
    fx = layer.forward(x)
    if np.asarray(fx).shape != x.shape:
        raise ShapeError("droppath branch must preserve shape")
    return x + rho * np.asarray(fx)
