"""Layer zoo: forward maps, analytic Jacobians, Lipschitz bounds."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipscope.layers import (
    AvgPool,
    BatchNorm,
    CenterNorm,
    Conv2D,
    FFN,
    GELU,
    LayerNorm,
    Linear,
    MaxPool,
    ReLU,
    Residual,
    RMSNorm,
    ShapeError,
    Sigmoid,
    Softmax,
    Swish,
    WeightedResidual,
    WeightNorm,
    check_jacobian_fd,
    droppath_apply,
    layer_lip_bound,
)

RNG = np.random.default_rng


def sample_layers(d=6, seed=0):
    """One instance of every vector-input layer kind, with a base point."""
    rng = RNG(seed)
    w = rng.standard_normal((d, d))
    x = rng.standard_normal(d)
    gamma = 0.5 + rng.random(d)
    beta = rng.standard_normal(d)
    return [
        (Linear(w, rng.standard_normal(d)), x),
        (Sigmoid(), x),
        (Softmax(), x),
        (GELU(), x),
        (Swish(), x),
        (LayerNorm(gamma, beta), x),
        (RMSNorm(gamma, beta), x),
        (CenterNorm(gamma, beta), x),
        (BatchNorm(gamma, beta, mode="inference",
                   running_mean=rng.standard_normal(d),
                   running_var=0.5 + rng.random(d)), x),
        (WeightNorm(gamma, rng.standard_normal((d, d))), x),
        (FFN(rng.standard_normal((2 * d, d)), rng.standard_normal(2 * d),
             rng.standard_normal((d, 2 * d)), rng.standard_normal(d)),
         x + 0.05),  # nudge away from ReLU kinks
        (Residual(Linear(0.3 * w)), x),
        (WeightedResidual(Linear(0.3 * w), 0.5 * np.ones(d)), x),
        (AvgPool(d), x),
    ]


# ---------------------------------------------------------------------------
# forward values


def test_linear_forward():
    layer = Linear(np.array([[1.0, 2.0], [0.0, -1.0]]), np.array([1.0, 0.0]))
    assert np.allclose(layer.forward(np.array([1.0, 1.0])), [4.0, -1.0])


def test_sigmoid_forward_midpoint():
    assert np.allclose(Sigmoid().forward(np.zeros(3)), 0.5)


def test_softmax_forward_sums_to_one():
    y = Softmax().forward(np.array([1.0, 2.0, 3.0]))
    assert abs(y.sum() - 1.0) < 1e-12
    assert np.all(np.diff(y) > 0)


def test_relu_forward():
    assert np.array_equal(
        ReLU().forward(np.array([-2.0, 0.0, 3.0])), [0.0, 0.0, 3.0]
    )


def test_layernorm_forward_standardizes():
    d = 8
    layer = LayerNorm(math.sqrt(d) * np.ones(d), np.zeros(d), eps=d * 1e-12)
    y = layer.forward(RNG(1).standard_normal(d) * 3 + 2)
    assert abs(y.mean()) < 1e-9
    assert abs(np.mean(y * y) - 1.0) < 1e-9


def test_centernorm_forward_removes_mean_only():
    d = 4
    layer = CenterNorm(np.ones(d), np.zeros(d))
    x = np.array([1.0, 2.0, 3.0, 6.0])
    y = layer.forward(x)
    assert abs(y.mean()) < 1e-12
    # Scale d/(d-1) preserved, no variance normalization.
    assert np.allclose(y, (4 / 3) * (x - 3.0))


def test_batchnorm_inference_is_elementwise():
    layer = BatchNorm(
        np.array([2.0, 1.0]), np.array([0.0, 1.0]),
        running_mean=np.array([1.0, 0.0]),
        running_var=np.array([4.0, 1.0]), eps=1e-12,
    )
    y = layer.forward(np.array([3.0, 2.0]))
    assert np.allclose(y, [2.0, 3.0])


def test_batchnorm_train_standardizes_batch():
    d, n = 3, 64
    layer = BatchNorm(np.ones(d), np.zeros(d), mode="train")
    x = RNG(2).standard_normal((d, n)) * 5 + 1
    y = layer.forward(x)
    assert np.abs(y.mean(axis=1)).max() < 1e-9
    assert np.abs(y.std(axis=1) - 1.0).max() < 1e-3


def test_batchnorm_train_rejects_single_vector():
    layer = BatchNorm(np.ones(3), np.zeros(3), mode="train")
    with pytest.raises(ShapeError):
        layer.forward(np.ones(3))


def test_ffn_forward_hand_value():
    ffn = FFN(np.eye(2), np.array([0.0, -1.0]), 2 * np.eye(2), np.zeros(2))
    assert np.allclose(ffn.forward(np.array([1.5, 0.5])), [3.0, 0.0])


def test_residual_adds_branch():
    layer = Residual(Linear(2 * np.eye(2)))
    assert np.allclose(layer.forward(np.array([1.0, -1.0])), [3.0, -3.0])


def test_weighted_residual_clamp():
    with pytest.raises(ValueError):
        WeightedResidual(Linear(np.eye(2)), np.array([1.0, 2.5]))


def test_weighted_residual_rezero_is_identity():
    layer = WeightedResidual(Linear(RNG(3).standard_normal((4, 4))),
                             np.zeros(4))
    x = RNG(4).standard_normal(4)
    assert np.array_equal(layer.forward(x), x)


def test_avgpool_forward():
    assert np.allclose(AvgPool(4).forward(np.array([1.0, 2.0, 3.0, 6.0])), 3.0)


def test_maxpool_forward():
    assert MaxPool(3).forward(np.array([1.0, 5.0, 2.0])) == 5.0


# ---------------------------------------------------------------------------
# Jacobians vs finite differences


@pytest.mark.parametrize("idx", range(len(sample_layers())))
def test_jacobian_matches_fd(idx):
    layer, x = sample_layers()[idx]
    report = check_jacobian_fd(layer, x, probes=20, seed=idx)
    assert report.max_rel_err < 1e-5, type(layer).__name__


def test_jacobian_layout_is_denominator():
    w = RNG(5).standard_normal((3, 5))
    assert np.array_equal(Linear(w).jacobian(np.zeros(5)), w.T)


def test_softmax_jacobian_rows_sum_to_zero():
    x = RNG(6).standard_normal(5)
    jac = Softmax().jacobian(x)
    # Output probabilities are shift-invariant, so the all-ones input
    # direction produces no first-order response.
    assert np.abs(np.ones(5) @ jac).max() < 1e-12


def test_conv_jacobian_matches_fd():
    rng = RNG(7)
    kernel = rng.standard_normal((3, 3, 2, 2))
    layer = Conv2D(kernel, stride=1, padding=1)
    x = rng.standard_normal((4, 4, 2))
    report = check_jacobian_fd(layer, x, probes=20)
    assert report.max_rel_err < 1e-5


def test_batchnorm_train_jacobian_matches_fd():
    rng = RNG(8)
    layer = BatchNorm(0.5 + rng.random(2), rng.standard_normal(2),
                      mode="train")
    x = rng.standard_normal((5, 5, 2))
    report = check_jacobian_fd(layer, x, probes=20)
    assert report.max_rel_err < 1e-5


def test_relu_jacobian_away_from_kink():
    x = np.array([-1.0, 2.0, -0.5])
    assert np.array_equal(ReLU().jacobian(x), np.diag([0.0, 1.0, 0.0]))


# ---------------------------------------------------------------------------
# Lipschitz bounds


def test_linear_bound_is_sigma_max():
    w = np.diag([3.0, 1.0])
    assert abs(Linear(w).lip_bound() - 3.0) < 1e-9


def test_sigmoid_bound_quarter():
    assert Sigmoid().lip_bound() == 0.25


def test_softmax_bound_one():
    assert Softmax().lip_bound() == 1.0


def test_layernorm_bound_formula():
    layer = LayerNorm(np.ones(4), np.zeros(4), eps=1e-4)
    assert abs(layer.lip_bound() - 100.0) < 1e-9


def test_weightnorm_bound_is_gamma_norm():
    layer = WeightNorm(np.array([3.0, 4.0]), RNG(9).standard_normal((2, 5)))
    assert abs(layer.lip_bound() - 5.0) < 1e-12


def test_centernorm_bound_d2():
    layer = CenterNorm(np.ones(2), np.zeros(2))
    assert abs(layer.lip_bound() - 2.0) < 1e-12


def test_avgpool_bound():
    assert abs(AvgPool(4).lip_bound() - 0.5) < 1e-12


def test_residual_bound_composes():
    inner = Linear(np.diag([2.0, 1.0]))
    assert abs(Residual(inner).lip_bound() - 3.0) < 1e-9
    wrs = WeightedResidual(inner, np.array([0.5, 0.25]))
    assert abs(wrs.lip_bound() - 2.0) < 1e-9


def test_ffn_bound_is_product():
    w1 = np.diag([2.0, 1.0])
    w2 = np.diag([3.0, 1.0])
    ffn = FFN(w1, np.zeros(2), w2, np.zeros(2))
    assert abs(ffn.lip_bound() - 6.0) < 1e-9


def test_layer_lip_bound_dispatch():
    assert layer_lip_bound(Sigmoid()) == 0.25


@pytest.mark.parametrize("idx", range(len(sample_layers())))
def test_bound_dominates_sampled_slopes(idx):
    layer, x = sample_layers(seed=10)[idx]
    bound = layer.lip_bound()
    rng = RNG(100 + idx)
    eps = 1e-7
    for _ in range(50):
        z = rng.standard_normal(x.shape)
        num = np.linalg.norm(
            np.asarray(layer.forward(x + eps * z))
            - np.asarray(layer.forward(x))
        )
        assert num / (eps * np.linalg.norm(z)) <= bound + 1e-6


@given(st.floats(-30, 30))
def test_gelu_slope_under_bound(t):
    h = 1e-5
    layer = GELU()
    slope = abs(
        float(layer.forward(np.array([t + h]))[0])
        - float(layer.forward(np.array([t - h]))[0])
    ) / (2 * h)
    assert slope <= layer.lip_bound() + 1e-6


@given(st.floats(0.01, 100.0), st.integers(0, 50))
@settings(max_examples=40)
def test_relu_positive_homogeneity(scale, seed):
    x = RNG(seed).standard_normal(5)
    assert np.allclose(ReLU().forward(scale * x), scale * ReLU().forward(x))


# ---------------------------------------------------------------------------
# heuristic flags and droppath


def test_conv_overlap_flag():
    kernel = np.ones((3, 3, 1, 1))
    assert Conv2D(kernel, stride=1, padding=1).bound_is_heuristic
    assert not Conv2D(kernel, stride=3, padding=0).bound_is_heuristic


def test_batchnorm_train_flag():
    assert BatchNorm(np.ones(2), np.zeros(2), mode="train").bound_is_heuristic
    assert not BatchNorm(np.ones(2), np.zeros(2)).bound_is_heuristic


def test_droppath_p1_identity():
    x = RNG(11).standard_normal(4)
    out = droppath_apply(Linear(np.eye(4)), x, p=1.0, seed=0)
    assert np.array_equal(out, x)


def test_droppath_p0_keeps_branch():
    x = RNG(12).standard_normal(4)
    out = droppath_apply(Linear(np.eye(4)), x, p=0.0, seed=0)
    assert np.allclose(out, 2 * x)


def test_droppath_deterministic_per_seed():
    x = RNG(13).standard_normal(4)
    a = droppath_apply(Linear(np.eye(4)), x, p=0.5, seed=7)
    b = droppath_apply(Linear(np.eye(4)), x, p=0.5, seed=7)
    assert np.array_equal(a, b)
