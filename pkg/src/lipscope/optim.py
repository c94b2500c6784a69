"""Optimizer procedures and a traced toy training loop.

SGD with momentum and AdamW are implemented as pure step functions on
explicit state records, both with decoupled weight decay: the decay term
−α·λ·w is applied directly to the weights, outside the gradient path.
AdamW's bias correction follows the fixed form m/(1−β₁), v/(1−β₂) by
default, with a per-step (1−βᵗ) variant behind a flag; the update
denominator is √v̂ + ε.

The toy training loop fits a tiny transformer plus a linear head to a
random linear teacher under squared error, differencing the loss
numerically per parameter entry.  It records the spectral norm of every
weight matrix at every step, which is the quantity whose drift the
landscape analysis cares about.
"""

from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .linalg import DegenerateInputError, full_singular_values
from .networks import Network, net_forward

__all__ = [
    "RejectedStepError",
    "SgdState",
    "AdamState",
    "StepRecord",
    "StepTrace",
    "constant_schedule",
    "sgd_step",
    "adamw_step",
    "raw_update_ratio",
    "weight_decay_apply",
    "clip_global_norm",
    "ema_update",
    "run_toy_training",
]

Schedule = Callable[[int], float]


class RejectedStepError(ValueError):
    """Raised when an optimizer step is refused (bad gradient or settings)."""


def constant_schedule(alpha: float) -> Schedule:
    """Learning-rate schedule that ignores the step index."""
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError(f"learning rate must be nonnegative, got {alpha}")
    return lambda t: alpha


@dataclass
class SgdState:
    """Momentum buffer and hyperparameters for SGD steps."""

    v: np.ndarray
    beta: float = 0.9
    weight_decay: float = 0.0
    schedule: Schedule = field(default_factory=lambda: constant_schedule(1e-3))

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")

    @classmethod
    def fresh(cls, w: np.ndarray, **kwargs) -> "SgdState":
        return cls(v=np.zeros_like(np.asarray(w, dtype=np.float64)), **kwargs)


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for AdamW steps."""

    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    eps_opt: float = 1e-8
    schedule: Schedule = field(default_factory=lambda: constant_schedule(1e-3))
    bias_correction: str = "fixed"
    step: int = 0

    def __post_init__(self):
        for name, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {b}")
        if not self.eps_opt > 0.0:
            raise ValueError(f"eps_opt must be positive, got {self.eps_opt}")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")
        if self.bias_correction not in ("fixed", "stepwise"):
            raise ValueError(
                f"bias_correction must be 'fixed' or 'stepwise', "
                f"got {self.bias_correction!r}"
            )

    @classmethod
    def fresh(cls, w: np.ndarray, **kwargs) -> "AdamState":
        w = np.asarray(w, dtype=np.float64)
        return cls(m=np.zeros_like(w), v=np.zeros_like(w), **kwargs)


def _check_gradient(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != w.shape:
        raise RejectedStepError(
            f"gradient shape {g.shape} does not match weights {w.shape}"
        )
    if not np.all(np.isfinite(g)):
        raise RejectedStepError("gradient contains non-finite entries")
    return g


def sgd_step(
    state: SgdState, w: np.ndarray, g: np.ndarray, t: int
) -> tuple[np.ndarray, SgdState]:
    """One SGD-with-momentum update with decoupled weight decay.

    v' = beta·v + (1−beta)·g, then w' = w − α_t·v' − α_t·λ·w.  With beta=0
    and λ=0 this is plain gradient descent.
    """
    w = np.asarray(w, dtype=np.float64)
    g = _check_gradient(g, w)
    alpha = state.schedule(t)
    v_new = state.beta * state.v + (1.0 - state.beta) * g
    w_new = w - alpha * v_new - alpha * state.weight_decay * w
    return w_new, replace(state, v=v_new)


def adamw_step(
    state: AdamState, w: np.ndarray, g: np.ndarray, t: int
) -> tuple[np.ndarray, AdamState]:
    """One AdamW update with decoupled weight decay.

    Moments are bias-corrected by the fixed factors 1/(1−β₁), 1/(1−β₂)
    (or the per-step (1−βᵗ) variants when the state says "stepwise"), the
    update is m̂/(√v̂ + ε), and the decay term −α_t·λ·w never touches the
    moment buffers.  With β₁ = β₂ = 0 and small ε the update is sign(g).
    """
    w = np.asarray(w, dtype=np.float64)
    g = _check_gradient(g, w)
    alpha = state.schedule(t)
    m_new = state.beta1 * state.m + (1.0 - state.beta1) * g
    v_new = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    if state.bias_correction == "fixed":
        c1 = 1.0 - state.beta1
        c2 = 1.0 - state.beta2
    else:
        if t < 1:
            raise RejectedStepError("stepwise bias correction needs t >= 1")
        c1 = 1.0 - state.beta1**t
        c2 = 1.0 - state.beta2**t
    m_hat = m_new / c1
    v_hat = v_new / c2
    update = m_hat / (np.sqrt(v_hat) + state.eps_opt)
    w_new = w - alpha * update - alpha * state.weight_decay * w
    return w_new, replace(state, m=m_new, v=v_new, step=t)


def raw_update_ratio(beta1: float, beta2: float, g: float = 1.0) -> float:
    """|first moment| / √(second moment) after one step from zero state.

    Without bias correction this is (1−β₁)/√(1−β₂) for any nonzero g: the
    range of a single Adam update.  (0.9, 0.999) gives √10 ≈ 3.162,
    (0.9, 0.99) gives exactly 1, (0.9, 0.95) gives ≈ 0.447.
    """
    g = float(g)
    if g == 0.0:
        raise DegenerateInputError("raw_update_ratio needs a nonzero gradient")
    for name, b in (("beta1", beta1), ("beta2", beta2)):
        if not 0.0 <= b < 1.0:
            raise ValueError(f"{name} must lie in [0, 1), got {b}")
    m1 = (1.0 - beta1) * g
    v1 = (1.0 - beta2) * g * g
    return abs(m1) / math.sqrt(v1)


def weight_decay_apply(w: np.ndarray, alpha: float, lam: float) -> np.ndarray:
    """Pure decay step w' = (1−α·λ)·w; a contraction toward zero.

    Every singular value scales by the same factor, so σ_max after n
    applications is (1−αλ)ⁿ times the original.  α·λ ≥ 1 is rejected: the
    map would no longer shrink weights toward zero.
    """
    if alpha < 0 or lam < 0:
        raise ValueError("alpha and lam must be nonnegative")
    if alpha * lam >= 1.0:
        raise RejectedStepError(
            f"alpha*lam = {alpha * lam} is not a contraction (needs < 1)"
        )
    return (1.0 - alpha * lam) * np.asarray(w, dtype=np.float64)


def clip_global_norm(
    gradients: list[np.ndarray], c: float
) -> list[np.ndarray]:
    """Scale a gradient list so its joint L2 norm is at most c."""
    if not c > 0:
        raise ValueError(f"clip threshold must be positive, got {c}")
    arrays = [np.asarray(g, dtype=np.float64) for g in gradients]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in arrays))
    if total <= c:
        return arrays
    scale = c / total
    return [g * scale for g in arrays]


def ema_update(
    w_ema: np.ndarray, w: np.ndarray, decay: float
) -> np.ndarray:
    """Exponential moving average: decay·w_ema + (1−decay)·w."""
    if not 0.0 <= decay < 1.0:
        raise ValueError(f"decay must lie in [0, 1), got {decay}")
    return decay * np.asarray(w_ema, dtype=np.float64) + (
        1.0 - decay
    ) * np.asarray(w, dtype=np.float64)


@dataclass(frozen=True)
class StepRecord:
    step: int
    weight_id: str
    sigma_max: float
    max_update: float
    loss: float


@dataclass
class StepTrace:
    """Chronological per-weight records from a toy training run."""

    records: list[StepRecord] = field(default_factory=list)
    halted: bool = False
    halt_reason: str | None = None

    @property
    def steps_completed(self) -> int:
        return max((r.step for r in self.records), default=-1) + 1

    def losses(self) -> list[float]:
        out: dict[int, float] = {}
        for r in self.records:
            out[r.step] = r.loss
        return [out[s] for s in sorted(out)]

    def sigma_series(self, weight_id: str) -> list[float]:
        return [r.sigma_max for r in self.records if r.weight_id == weight_id]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "weight_id", "sigma_max", "max_update", "loss"])
        for r in self.records:
            writer.writerow(
                [r.step, r.weight_id, repr(r.sigma_max), repr(r.max_update), repr(r.loss)]
            )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_text())


def _weight_sigma_max(arr: np.ndarray) -> float:
    """Spectral norm of a weight array; 4-D conv kernels via their patch matrix."""
    if arr.ndim == 4:
        k1, k2, c, o = arr.shape
        mat = arr.reshape(k1 * k2 * c, o)
    else:
        mat = arr
    return float(full_singular_values(mat)[0])


def _fd_gradient(
    arr: np.ndarray, loss_fn: Callable[[], float], step: float
) -> np.ndarray:
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + step
        plus = loss_fn()
        flat[j] = orig - step
        minus = loss_fn()
        flat[j] = orig
        gflat[j] = (plus - minus) / (2.0 * step)
    return grad


def run_toy_training(
    net: Network,
    steps: int,
    optimizer: str = "adamw",
    lr: float = 1e-3,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    momentum: float = 0.9,
    eps_opt: float = 1e-8,
    bias_correction: str = "fixed",
    batch_size: int = 4,
    head_dim: int = 2,
    seed: int = 0,
    zero_gradients: bool = False,
    fd_step: float = 1e-5,
) -> StepTrace:
    """Fit net + linear head to a random linear teacher, tracing σ_max.

    The loss is mean squared error of head @ flatten(net(x)) against a
    fixed random linear function of the input, over a fixed Gaussian
    batch.  Gradients come from central differences on every parameter
    entry, so keep the network tiny.  ``zero_gradients`` skips the data
    term entirely, leaving only weight decay (useful for checking the pure
    contraction).  A non-finite loss halts the run, keeping the partial
    trace.
    """
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    if optimizer not in ("adamw", "sgd"):
        raise ValueError(f"unknown optimizer: {optimizer!r}")
    net = copy.deepcopy(net)

    size = net.data_size
    ss = np.random.SeedSequence((int(seed), 5))
    head_rng, data_rng, teacher_rng = (
        np.random.default_rng(child) for child in ss.spawn(3)
    )
    head = head_rng.standard_normal((head_dim, size)) / math.sqrt(size)
    inputs = data_rng.standard_normal((batch_size,) + net.data_shape)
    teacher = teacher_rng.standard_normal((head_dim, size)) / math.sqrt(size)
    targets = np.stack(
        [teacher @ inputs[i].ravel() for i in range(batch_size)], axis=1
    )

    weights: list[tuple[str, np.ndarray]] = net.named_weights()
    weights.append(("head", head))

    def loss_fn() -> float:
        total = 0.0
        for i in range(batch_size):
            out = net_forward(net, inputs[i], allow_nonfinite=True)
            pred = head @ out.ravel()
            diff = pred - targets[:, i]
            total += float(np.sum(diff * diff))
        return total / (batch_size * head_dim)

    schedule = constant_schedule(lr)
    states: dict[str, SgdState | AdamState] = {}
    for name, arr in weights:
        if optimizer == "sgd":
            states[name] = SgdState.fresh(
                arr, beta=momentum, weight_decay=weight_decay, schedule=schedule
            )
        else:
            states[name] = AdamState.fresh(
                arr,
                beta1=beta1,
                beta2=beta2,
                weight_decay=weight_decay,
                eps_opt=eps_opt,
                schedule=schedule,
                bias_correction=bias_correction,
            )

    trace = StepTrace()
    for t in range(1, steps + 1):
        loss = loss_fn()
        if not math.isfinite(loss):
            trace.halted = True
            trace.halt_reason = f"non-finite loss at step {t - 1}"
            break
        updates: dict[str, np.ndarray] = {}
        for name, arr in weights:
            if zero_gradients:
                grad = np.zeros_like(arr)
            else:
                grad = _fd_gradient(arr, loss_fn, fd_step)
            step_fn = sgd_step if optimizer == "sgd" else adamw_step
            new_w, states[name] = step_fn(states[name], arr, grad, t)
            updates[name] = new_w
        for name, arr in weights:
            delta = updates[name] - arr
            arr[...] = updates[name]
            trace.records.append(
                StepRecord(
                    step=t - 1,
                    weight_id=name,
                    sigma_max=_weight_sigma_max(arr),
                    max_update=float(np.max(np.abs(delta))),
                    loss=loss,
                )
            )
    return trace
