"""Dense linear-algebra kernel contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipscope.linalg import (
    ConvergenceError,
    NormKind,
    ShapeError,
    as_matrix,
    conv_output_side,
    full_singular_values,
    im2col,
    jacobi_singular_values,
    matmul,
    operator_norm,
    qr_orthonormalize,
    spectral_norm,
    vector_norm,
)


def random_matrix(rows, cols, seed):
    return np.random.default_rng(seed).standard_normal((rows, cols))


# ---------------------------------------------------------------------------
# vector norms


def test_vector_norm_values():
    v = np.array([3.0, -4.0, 0.0])
    assert vector_norm(v, NormKind.L1) == 7.0
    assert vector_norm(v, NormKind.L2) == 5.0
    assert vector_norm(v, NormKind.LINF) == 4.0


def test_vector_norm_flattens():
    v = np.arange(6.0).reshape(2, 3)
    assert vector_norm(v, NormKind.L1) == 15.0


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_norm_ordering(values):
    v = np.array(values)
    linf = vector_norm(v, NormKind.LINF)
    l2 = vector_norm(v, NormKind.L2)
    l1 = vector_norm(v, NormKind.L1)
    assert linf <= l2 * (1 + 1e-12) + 1e-12
    assert l2 <= l1 * (1 + 1e-12) + 1e-12


def test_norm_kind_from_string():
    assert NormKind("l1") is NormKind.L1
    assert NormKind("linf") is NormKind.LINF
    with pytest.raises(ValueError):
        NormKind("l3")


# ---------------------------------------------------------------------------
# matmul / QR


def test_matmul_matches_numpy():
    a = random_matrix(4, 3, 0)
    b = random_matrix(3, 5, 1)
    assert np.allclose(matmul(a, b), a @ b)


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(random_matrix(4, 3, 0), random_matrix(4, 5, 1))


def test_qr_orthonormal_columns():
    q = qr_orthonormalize(random_matrix(8, 8, 3))
    assert np.abs(q.T @ q - np.eye(8)).max() < 1e-12


def test_qr_deterministic():
    a = random_matrix(6, 6, 4)
    assert np.array_equal(qr_orthonormalize(a), qr_orthonormalize(a.copy()))


# ---------------------------------------------------------------------------
# spectral norm


def test_spectral_norm_diagonal():
    a = np.diag([0.5, -3.0, 2.0])
    assert abs(spectral_norm(a) - 3.0) < 1e-9


def test_spectral_norm_matches_svd():
    a = random_matrix(20, 12, 5)
    assert abs(spectral_norm(a) - np.linalg.svd(a, compute_uv=False)[0]) < 1e-8


def test_spectral_norm_zero_matrix():
    assert spectral_norm(np.zeros((3, 4))) == 0.0


def test_spectral_norm_deterministic_per_seed():
    a = random_matrix(10, 10, 6)
    assert spectral_norm(a, seed=2) == spectral_norm(a, seed=2)


def test_spectral_norm_tied_top_value_converges():
    # Exact ties do not stall: any top-space vector gives the same value.
    a = np.diag([2.0, 2.0, 0.1])
    assert abs(spectral_norm(a) - 2.0) < 1e-9


def test_spectral_norm_raises_on_stall_with_last_estimate():
    # A near-tie separated by ~1e-4 moves the estimate by more than tol
    # every iteration without settling inside the budget.
    a = np.diag([1.0, 1.0 - 1e-4, 0.3])
    with pytest.raises(ConvergenceError) as exc:
        spectral_norm(a)
    assert exc.value.last_estimate is not None
    assert abs(exc.value.last_estimate - 1.0) < 1e-3


def test_operator_norm_falls_back_to_svd():
    a = np.diag([1.0, 1.0 - 1e-4, 0.3])
    assert operator_norm(a) == 1.0


def test_operator_norm_agrees_when_iteration_converges():
    a = random_matrix(9, 7, 8)
    assert abs(operator_norm(a) - spectral_norm(a)) < 1e-9


# ---------------------------------------------------------------------------
# full spectra


def test_full_singular_values_sorted_descending():
    s = full_singular_values(random_matrix(10, 6, 9))
    assert np.all(np.diff(s) <= 0)
    assert s.shape == (6,)


def test_jacobi_agrees_with_lapack():
    a = random_matrix(12, 8, 10)
    s_j = jacobi_singular_values(a)
    s_l = full_singular_values(a)
    assert np.abs(np.sort(s_j) - np.sort(s_l)).max() < 1e-9


def test_jacobi_agrees_with_power_iteration():
    a = random_matrix(7, 7, 11)
    assert abs(jacobi_singular_values(a)[0] - spectral_norm(a)) < 1e-8


@given(st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_spectrum_invariant_under_orthogonal_rotation(seed):
    a = random_matrix(5, 5, seed)
    q = qr_orthonormalize(random_matrix(5, 5, seed + 1))
    assert np.abs(
        full_singular_values(q @ a) - full_singular_values(a)
    ).max() < 1e-9


# ---------------------------------------------------------------------------
# im2col


def test_conv_output_side():
    assert conv_output_side(5, 3, 1, 1) == 5
    assert conv_output_side(6, 2, 2, 0) == 3


def test_im2col_identity_kernel_layout():
    # A 1x1 kernel makes patches equal to the channel vectors themselves.
    x = np.arange(2 * 2 * 3, dtype=float).reshape(2, 2, 3)
    patches = im2col(x, kernel=1, stride=1, padding=0)
    assert patches.shape == (4, 3)
    assert np.array_equal(patches, x.reshape(4, 3))


def test_im2col_padding_zeros():
    x = np.ones((2, 2, 1))
    patches = im2col(x, kernel=3, stride=1, padding=1)
    # Center patch of the corner window sees the 1s, corners see padding.
    assert patches.shape == (4, 9)
    assert patches.sum() == 16.0  # each input cell appears once per window


def test_im2col_stride_equals_kernel_partitions_input():
    x = np.random.default_rng(12).standard_normal((4, 4, 2))
    patches = im2col(x, kernel=2, stride=2, padding=0)
    assert patches.shape == (4, 8)
    # Non-overlapping windows: every entry of x appears exactly once.
    assert np.isclose(np.sort(patches.ravel()).sum(), x.sum())


def test_as_matrix_rejects_vector():
    with pytest.raises(ShapeError):
        as_matrix(np.zeros(3))
