"""Dense linear algebra kernels shared by every other module.

Everything downstream (layer Jacobians, attention maps, bound composition,
the sweep harness) funnels its numerics through the handful of operations
here: matrix products with shape checking, the largest singular value via
power iteration, full spectra, Householder orthonormalization, vector norms
for perturbation ratios, and the im2col patch extraction that turns a
convolution into one matrix product.

All arrays are 64-bit real and dense.  Matrices are 2-D ``numpy.ndarray``,
vectors are 1-D.  Infinite bound values are plain ``math.inf`` floats; use
:func:`format_quantity` when writing them to CSV or JSON so that the sentinel
renders as the literal string ``"inf"``.
"""

from __future__ import annotations

import enum
import math

import numpy as np

__all__ = [
    "DenseMatrix",
    "Vector",
    "NormKind",
    "ShapeError",
    "ConvergenceError",
    "DegenerateInputError",
    "as_matrix",
    "as_vector",
    "matmul",
    "vector_norm",
    "operator_norm",
    "spectral_norm",
    "full_singular_values",
    "jacobi_singular_values",
    "qr_orthonormalize",
    "im2col",
    "conv_output_side",
    "format_quantity",
]

# Type aliases; the package works on plain numpy arrays throughout.
DenseMatrix = np.ndarray
Vector = np.ndarray


class ShapeError(ValueError):
    """Raised when operands have incompatible or non-2-D/1-D shapes."""


class ConvergenceError(RuntimeError):
    """Raised when an iteration fails to converge.

    The best estimate reached so far is attached as ``last_estimate`` so
    callers can inspect how far the iteration got.
    """

    def __init__(self, message: str, last_estimate: float | None = None):
        super().__init__(message)
        self.last_estimate = last_estimate


class DegenerateInputError(ValueError):
    """Raised when an input is rank-deficient where full rank is required."""


class NormKind(enum.Enum):
    """Vector norm used for perturbation ratios (L1, L2 or L-infinity)."""

    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def from_string(cls, name: str) -> "NormKind":
        for kind in cls:
            if kind.value == name.lower():
                return kind
        valid = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown norm kind {name!r}; expected one of: {valid}")


def as_matrix(a: np.ndarray) -> DenseMatrix:
    """Coerce ``a`` to a 2-D float64 array, rejecting anything else."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


def as_vector(x: np.ndarray) -> Vector:
    """Coerce ``x`` to a 1-D float64 array, rejecting anything else."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Product ``a @ b`` with an explicit inner-dimension check.

    The accumulation order is the one fixed by the underlying BLAS for a
    given shape and thread count, so repeated calls on identical inputs give
    bit-identical results on the same machine.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"inner dimensions disagree: {a.shape} @ {b.shape}"
        )
    return a @ b


def vector_norm(x: np.ndarray, kind: NormKind = NormKind.L2) -> float:
    """L1, L2 or L-infinity norm of ``x`` (flattened first)."""
    flat = np.asarray(x, dtype=np.float64).ravel()
    if kind == NormKind.L1:
        return float(np.sum(np.abs(flat)))
    if kind == NormKind.L2:
        return float(np.linalg.norm(flat))
    if kind == NormKind.LINF:
        return float(np.max(np.abs(flat))) if flat.size else 0.0
    raise ValueError(f"unknown norm kind: {kind!r}")


def spectral_norm(
    a: DenseMatrix,
    tol: float = 1e-10,
    max_iter: int = 1000,
    seed: int = 0,
) -> float:
    """Largest singular value of ``a`` by power iteration on ``a.T @ a``.

    The start vector is a seeded Gaussian draw, so the call is deterministic
    for a given ``(a, seed)``.  Iteration stops when the singular value
    estimate changes by less than ``tol`` relative to its magnitude.  Ties in
    the top singular value do not stall convergence: every vector in the top
    eigenspace yields the same value, even though the iterate itself may keep
    rotating.

    Raises :class:`ConvergenceError` (with ``last_estimate`` attached) after
    ``max_iter`` iterations without convergence.
    """
    a = as_matrix(a)
    if a.size == 0:
        raise ShapeError("spectral_norm of an empty matrix is undefined")
    if not np.any(a):
        return 0.0

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)

    sigma = 0.0
    for _ in range(max_iter):
        w = a @ v
        sigma_new = float(np.linalg.norm(w))
        if sigma_new == 0.0:
            # The start vector landed in the null space; redraw and go on.
            v = rng.standard_normal(a.shape[1])
            v /= np.linalg.norm(v)
            continue
        u = a.T @ w
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return sigma_new
        v = u / nu
        if abs(sigma_new - sigma) <= tol * max(1.0, sigma_new):
            return sigma_new
        sigma = sigma_new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(last estimate {sigma})",
        last_estimate=sigma,
    )


def operator_norm(
    a: DenseMatrix,
    tol: float = 1e-10,
    max_iter: int = 1000,
    seed: int = 0,
) -> float:
    """σ_max of ``a``: power iteration first, dense SVD on a stall.

    The stopping rule of :func:`spectral_norm` can run out of iterations
    when the two largest singular values are separated by less than roughly
    1/max_iter in relative terms; its last estimate is then a slight
    underestimate.  Bound computations need a value that is not below the
    true σ_max, so this wrapper falls back to the full decomposition, which
    has no gap dependence.
    """
    try:
        return spectral_norm(a, tol=tol, max_iter=max_iter, seed=seed)
    except ConvergenceError:
        return float(full_singular_values(a)[0])


def full_singular_values(a: DenseMatrix) -> Vector:
    """All singular values of ``a`` in descending order.

    Backed by LAPACK through :func:`numpy.linalg.svd`; accuracy is far below
    the 1e-9 the spectrum reports need.  :func:`jacobi_singular_values` is an
    independent route used to cross-check this one on small matrices.
    """
    a = as_matrix(a)
    if a.size == 0:
        raise ShapeError("singular values of an empty matrix are undefined")
    return np.linalg.svd(a, compute_uv=False)


def jacobi_singular_values(
    a: DenseMatrix,
    tol: float = 1e-12,
    max_sweeps: int = 60,
) -> Vector:
    """All singular values of ``a`` via one-sided Jacobi rotations.

    Columns are rotated pairwise until all column pairs are orthogonal to
    within ``tol`` (relative to the column norms); singular values are then
    the column norms, returned in descending order.  Cost grows cubically,
    so keep this to matrices of a few hundred rows; it exists as an
    independent check on :func:`full_singular_values`, not as the fast path.
    """
    a = as_matrix(a)
    if a.size == 0:
        raise ShapeError("singular values of an empty matrix are undefined")
    # One-sided Jacobi orthogonalizes columns; work on the orientation with
    # fewer columns (singular values are shared with the transpose).
    work = a.copy() if a.shape[0] >= a.shape[1] else a.T.copy()
    n = work.shape[1]

    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                cp = work[:, p]
                cq = work[:, q]
                alpha = float(cp @ cp)
                beta = float(cq @ cq)
                gamma = float(cp @ cq)
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (
                    abs(zeta) + math.sqrt(1.0 + zeta * zeta)
                )
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * cp - s * cq
                new_q = s * cp + c * cq
                work[:, p] = new_p
                work[:, q] = new_q
                rotated = True
        if not rotated:
            break
    else:
        raise ConvergenceError(
            f"one-sided Jacobi did not converge in {max_sweeps} sweeps"
        )

    sigma = np.linalg.norm(work, axis=0)
    sigma.sort()
    return sigma[::-1].copy()


def qr_orthonormalize(a: DenseMatrix) -> DenseMatrix:
    """Orthonormal basis for the columns of ``a`` via Householder QR.

    Requires ``rows >= cols`` and full column rank; rank deficiency raises
    :class:`DegenerateInputError` rather than returning a silently invalid
    basis.  The sign of each column is fixed so the diagonal of R is
    positive, making the result unique for a given input.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        raise ShapeError(
            f"qr_orthonormalize needs rows >= cols, got shape {a.shape}"
        )
    q, r = np.linalg.qr(a)
    diag = np.diagonal(r).copy()
    scale = np.max(np.abs(diag)) if diag.size else 0.0
    if scale == 0.0 or np.any(np.abs(diag) <= 1e-12 * scale):
        raise DegenerateInputError(
            "input matrix is rank-deficient; cannot orthonormalize columns"
        )
    signs = np.sign(diag)
    return q * signs


def conv_output_side(side: int, kernel: int, stride: int, padding: int) -> int:
    """Number of valid convolution positions along one spatial side."""
    span = side + 2 * padding - kernel
    if span < 0:
        raise ShapeError(
            f"kernel {kernel} exceeds padded side {side + 2 * padding}"
        )
    return span // stride + 1


def im2col(
    x: np.ndarray,
    kernel: int,
    stride: int = 1,
    padding: int = 0,
) -> DenseMatrix:
    """Flatten sliding image patches into matrix rows.

    ``x`` has shape ``(H, W, C)``.  Each output row is one ``K x K x C``
    patch flattened in (row-offset, col-offset, channel) order; rows are
    ordered over the output grid row-major.  With the kernel reshaped to a
    ``(K*K*C, O)`` matrix, the convolution is exactly ``im2col(x) @ w``.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected an (H, W, C) image, got shape {arr.shape}")
    if kernel < 1 or stride < 1 or padding < 0:
        raise ValueError(
            f"invalid patch geometry: kernel={kernel} stride={stride} "
            f"padding={padding}"
        )
    h, w, c = arr.shape
    out_h = conv_output_side(h, kernel, stride, padding)
    out_w = conv_output_side(w, kernel, stride, padding)
    if padding:
        arr = np.pad(arr, ((padding, padding), (padding, padding), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(
        arr, (kernel, kernel), axis=(0, 1)
    )
    windows = windows[::stride, ::stride]
    # windows: (out_h, out_w, C, K, K) -> rows flattened as (K, K, C).
    patches = windows.transpose(0, 1, 3, 4, 2).reshape(
        out_h * out_w, kernel * kernel * c
    )
    return np.ascontiguousarray(patches)


def format_quantity(x: float) -> str:
    """Render a float for CSV/JSON output; infinities become ``"inf"``.

    Finite values use ``repr``, the shortest string that round-trips to the
    same float, which keeps emitted files byte-stable across runs.
    """
    xf = float(x)
    if math.isinf(xf):
        return "-inf" if xf < 0 else "inf"
    if math.isnan(xf):
        return "nan"
    return repr(xf)
