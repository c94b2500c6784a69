"""Monte-Carlo Lipschitz estimation, bound composition, and range checks.

Three quantities are tracked for any map f.  The sampled lower view K_s is
the largest observed ratio ‖f(x+εz)−f(x)‖_p / ‖εz‖_p over random base
points x and Gaussian directions z.  The analytic upper view K_u is the
product of per-stage bounds, with shortcut stages contributing
1 + bound(branch).  The true constant sits between them, so every finite
pair must satisfy K_s ≤ K_u; :func:`sandwich_check` verifies that with a
small slack.

Estimates are deterministic per seed, and the direction streams are
prefix-stable: raising the perturbation count keeps every earlier draw, so
K_s can only grow with more sampling.  Overflowing maps are data, not
errors: a non-finite output flags the estimate and pins its value to +inf
so sweep tables stay total.

The module also computes per-layer profiles (how much of the slope is
accumulated by block l, and how much the tail after block l amplifies),
DropPath-adjusted bounds, and floating-point range checks of forward
activations and backward chained-Jacobian entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .layers import Layer
from .linalg import DegenerateInputError, NormKind, vector_norm
from .networks import (
    JACOBIAN_SIZE_GUARD,
    Network,
    ResidualMode,
    TransformerBlock,
    net_block_jacobians,
    net_block_outputs,
    net_forward,
    net_forward_trace,
)
from .attention import AttentionKind, attn_lip_bound

__all__ = [
    "PRECISION_RANGE",
    "EstimatorSettings",
    "LipschitzEstimate",
    "LayerwiseProfile",
    "BoundFactor",
    "BoundReport",
    "PrincipleReport",
    "network_function",
    "layer_function",
    "estimate_K",
    "estimate_K_multi",
    "estimate_layerwise",
    "compose_network_bound",
    "droppath_bound",
    "check_principles",
    "sandwich_check",
]

# Largest representable magnitudes of the half and single precision formats.
PRECISION_RANGE = {
    "fp16": float(np.finfo(np.float16).max),
    "fp32": float(np.finfo(np.float32).max),
}


def _json_number(x: float):
    """Floats for JSON, with non-finite values as strings ("inf", "nan")."""
    x = float(x)
    if math.isfinite(x):
        return x
    if math.isnan(x):
        return "nan"
    return "inf" if x > 0 else "-inf"


@dataclass(frozen=True)
class EstimatorSettings:
    """Sampling budget and metric for the Monte-Carlo estimator."""

    base_points: int = 10
    perturbations: int = 10
    epsilon: float = 1e-7
    norm: NormKind = NormKind.L2

    def __post_init__(self):
        if self.base_points < 1 or self.perturbations < 1:
            raise ValueError("base_points and perturbations must be at least 1")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class LipschitzEstimate:
    """Result of one sampled-slope scan.

    ``argmax_sample`` holds the (base point, perturbation) indices of the
    maximizing pair; for an overflowed estimate it names the offending
    sample instead (perturbation index -1 when the base point itself
    produced non-finite output).
    """

    value: float
    norm: NormKind
    epsilon: float
    num_base_points: int
    num_perturbations: int
    seed: int
    argmax_sample: tuple[int, int]
    overflowed: bool = False
    skipped_zero_denominators: int = 0

    def to_json_dict(self) -> dict:
        return {
            "K_s": _json_number(self.value),
            "norm": self.norm.value,
            "epsilon": self.epsilon,
            "num_base_points": self.num_base_points,
            "num_perturbations": self.num_perturbations,
            "seed": self.seed,
            "argmax_sample": list(self.argmax_sample),
            "overflowed": self.overflowed,
        }


@dataclass
class LayerwiseProfile:
    """Per-block slope decomposition from a single base point.

    ``from_input[l]`` is the sampled slope of the first l blocks;
    ``to_output[l]`` is the amplification of the remaining tail, measured
    as ‖Δ output‖ / ‖Δ at block l‖ over shared perturbation draws.  Both
    lists have length depth+1 and bracket the identity cases exactly:
    from_input[0] = 1 and to_output[depth] = 1.  Tail entries with no
    responding sample (zero denominator throughout) are NaN and listed in
    ``undefined``.
    """

    from_input: list[float]
    to_output: list[float]
    undefined: list[int]
    norm: NormKind
    epsilon: float
    perturbations: int
    seed: int
    overflowed: bool = False

    @property
    def depth(self) -> int:
        return len(self.from_input) - 1

    def to_json_dict(self) -> dict:
        return {
            "K_l0": [_json_number(v) for v in self.from_input],
            "K_Ll": [_json_number(v) for v in self.to_output],
            "undefined": self.undefined,
            "norm": self.norm.value,
            "epsilon": self.epsilon,
            "num_perturbations": self.perturbations,
            "seed": self.seed,
            "overflowed": self.overflowed,
        }


@dataclass(frozen=True)
class BoundFactor:
    """One multiplicative stage of a composed bound.

    ``branch_bound`` is the bound of the wrapped branch before the
    shortcut is accounted for; for norm stages it equals ``stage_bound``.
    ``droppable`` marks shortcut-wrapped stages whose branch DropPath may
    remove.
    """

    label: str
    branch_bound: float
    stage_bound: float
    droppable: bool
    heuristic: bool = False
    caveats: tuple[str, ...] = ()


@dataclass
class BoundReport:
    """Composed analytic upper view: product of per-stage bounds."""

    factors: list[BoundFactor]
    total: float
    caveats: tuple[str, ...]

    @property
    def heuristic(self) -> bool:
        return any(f.heuristic for f in self.factors)

    @property
    def per_layer_bounds(self) -> list[float]:
        return [f.stage_bound for f in self.factors]

    def to_json_dict(self) -> dict:
        return {
            "K_u": _json_number(self.total),
            "per_layer_bounds": [
                _json_number(f.stage_bound) for f in self.factors
            ],
            "labels": [f.label for f in self.factors],
            "caveats": list(self.caveats),
            "heuristic": self.heuristic,
        }


@dataclass
class PrincipleReport:
    """Forward/backward floating-point range scan.

    A stage or gradient violates the chosen precision iff its peak
    magnitude exceeds the largest representable value R (non-finite peaks
    count as violations).  The backward scan materializes the chained
    Jacobian, so it is skipped (``max_abs_gradient`` is None) when the data
    size exceeds the Jacobian guard.
    """

    precision: str
    threshold: float
    stage_labels: list[str]
    max_abs_activation: list[float]
    forward_violations: list[int]
    max_abs_gradient: list[float] | None
    backward_violations: list[int] | None

    @property
    def forward_ok(self) -> bool:
        return not self.forward_violations

    @property
    def backward_ok(self) -> bool | None:
        if self.max_abs_gradient is None:
            return None
        return not self.backward_violations

    def to_json_dict(self) -> dict:
        return {
            "precision": self.precision,
            "range": _json_number(self.threshold),
            "stage_labels": self.stage_labels,
            "max_abs_activation": [
                _json_number(v) for v in self.max_abs_activation
            ],
            "forward_violations": self.forward_violations,
            "max_abs_gradient": (
                None
                if self.max_abs_gradient is None
                else [_json_number(v) for v in self.max_abs_gradient]
            ),
            "backward_violations": self.backward_violations,
        }


def network_function(net: Network) -> Callable[[np.ndarray], np.ndarray]:
    """Adapt a network for the estimator: overflow becomes data, not error."""
    return lambda x: net_forward(net, x, allow_nonfinite=True)


def layer_function(layer: Layer) -> Callable[[np.ndarray], np.ndarray]:
    """Adapt a single layer for the estimator."""
    return layer.forward


def _base_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, 0)))


def _direction_rng(seed: int, base_index: int) -> np.random.Generator:
    # One substream per base point keeps the draws prefix-stable in both
    # the base-point and perturbation counts.
    return np.random.default_rng(np.random.SeedSequence((seed, 1, base_index)))


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return seed


def estimate_K_multi(
    f: Callable[[np.ndarray], np.ndarray],
    data_shape: tuple[int, ...],
    norms: Sequence[NormKind],
    base_points: int = 10,
    perturbations: int = 10,
    epsilon: float = 1e-7,
    seed: int = 0,
    bases: Sequence[np.ndarray] | None = None,
    directions: np.ndarray | None = None,
) -> dict[NormKind, LipschitzEstimate]:
    """Sampled-slope estimates under several norms from shared draws.

    Every norm sees exactly the same (x, z) pairs, which is what makes
    cross-norm order comparisons meaningful.  ``bases`` overrides the
    standard-normal base points; ``directions`` (indexed [base][pert])
    overrides the Gaussian perturbation directions.  The scan is a single
    ordered pass, so parallel callers splitting on base points would have
    to reduce in index order to reproduce it.
    """
    if not norms:
        raise ValueError("at least one norm is required")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    seed = _check_seed(seed)

    if bases is not None:
        bases = [np.asarray(b, dtype=np.float64) for b in bases]
        base_points = len(bases)
    if directions is not None:
        directions = np.asarray(directions, dtype=np.float64)
        perturbations = directions.shape[1]
    if base_points < 1 or perturbations < 1:
        raise ValueError("base_points and perturbations must be at least 1")

    if bases is None:
        drawn = _base_rng(seed).standard_normal((base_points,) + data_shape)
        bases = [drawn[b] for b in range(base_points)]

    best = {kind: 0.0 for kind in norms}
    arg = {kind: (-1, -1) for kind in norms}
    skipped = 0
    overflowed = False
    overflow_sample = (-1, -1)

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for b in range(base_points):
            x = bases[b]
            fx = np.asarray(f(x), dtype=np.float64)
            if not np.all(np.isfinite(fx)):
                overflowed = True
                overflow_sample = (b, -1)
                break
            rng = None if directions is not None else _direction_rng(seed, b)
            for t in range(perturbations):
                if directions is not None:
                    z = directions[b][t]
                else:
                    z = rng.standard_normal(data_shape)
                x_hat = x + epsilon * z
                delta_in = (x_hat - x).ravel()
                fy = np.asarray(f(x_hat), dtype=np.float64)
                delta_out = (fy - fx).ravel()
                finite = bool(np.all(np.isfinite(delta_out)))
                for kind in norms:
                    den = vector_norm(delta_in, kind)
                    if den == 0.0:
                        skipped += 1
                        continue
                    ratio = (
                        vector_norm(delta_out, kind) / den
                        if finite
                        else math.inf
                    )
                    if ratio > best[kind]:
                        best[kind] = ratio
                        arg[kind] = (b, t)
                if not finite:
                    overflowed = True
                    overflow_sample = (b, t)
                    break
            if overflowed:
                break

    if overflowed:
        for kind in norms:
            best[kind] = math.inf
            arg[kind] = overflow_sample
    elif all(a == (-1, -1) for a in arg.values()) and skipped > 0:
        raise DegenerateInputError(
            "every sampled perturbation had a zero realized input difference"
        )

    return {
        kind: LipschitzEstimate(
            value=best[kind],
            norm=kind,
            epsilon=epsilon,
            num_base_points=base_points,
            num_perturbations=perturbations,
            seed=seed,
            argmax_sample=arg[kind],
            overflowed=overflowed,
            skipped_zero_denominators=skipped,
        )
        for kind in norms
    }


def estimate_K(
    f: Callable[[np.ndarray], np.ndarray],
    data_shape: tuple[int, ...],
    base_points: int = 10,
    perturbations: int = 10,
    epsilon: float = 1e-7,
    norm: NormKind = NormKind.L2,
    seed: int = 0,
    bases: Sequence[np.ndarray] | None = None,
    directions: np.ndarray | None = None,
) -> LipschitzEstimate:
    """Largest sampled slope of f around Gaussian base points.

    K_s = max over (x, z) of ‖f(x+εz)−f(x)‖_p / ‖εz‖_p, where the
    denominator uses the realized difference (x+εz)−x so the ratio is a
    true finite difference even after rounding.  Constant maps give 0,
    scaling f by a scales the result by |a|, and adding a constant to f
    changes nothing.  A non-finite f output flags the estimate and pins it
    to +inf.
    """
    return estimate_K_multi(
        f,
        data_shape,
        [norm],
        base_points=base_points,
        perturbations=perturbations,
        epsilon=epsilon,
        seed=seed,
        bases=bases,
        directions=directions,
    )[norm]


def estimate_layerwise(
    net: Network,
    x: np.ndarray,
    perturbations: int = 10,
    epsilon: float = 1e-7,
    norm: NormKind = NormKind.L2,
    seed: int = 0,
) -> LayerwiseProfile:
    """Decompose a network's sampled slope by block around one base point.

    Each perturbation costs a single forward pair; the per-block
    differences of that pair feed both profiles, so for every sample
    from_input[L] = from_input[l] · to_output[l] holds exactly by
    construction.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if perturbations < 1:
        raise ValueError("perturbations must be at least 1")
    seed = _check_seed(seed)
    x = np.asarray(x, dtype=np.float64)

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        base_blocks = net_block_outputs(net, x, allow_nonfinite=True)
        depth = len(base_blocks) - 1
        base_finite = all(np.all(np.isfinite(a)) for a in base_blocks)

        from_input = [0.0] * (depth + 1)
        to_output = [0.0] * (depth + 1)
        defined = [False] * (depth + 1)
        overflowed = not base_finite
        rng = _direction_rng(seed, 0)

        for _ in range(perturbations):
            z = rng.standard_normal(x.shape)
            x_hat = x + epsilon * z
            pert_blocks = net_block_outputs(net, x_hat, allow_nonfinite=True)
            deltas = []
            for l in range(depth + 1):
                diff = (pert_blocks[l] - base_blocks[l]).ravel()
                if np.all(np.isfinite(diff)):
                    deltas.append(vector_norm(diff, norm))
                else:
                    deltas.append(math.inf)
                    overflowed = True
            den0 = deltas[0]
            if den0 == 0.0:
                continue
            for l in range(depth + 1):
                ratio = (
                    deltas[l] / den0 if math.isfinite(deltas[l]) else math.inf
                )
                from_input[l] = max(from_input[l], ratio)
                if deltas[l] == 0.0 or not math.isfinite(deltas[l]):
                    continue
                tail = (
                    deltas[depth] / deltas[l]
                    if math.isfinite(deltas[depth])
                    else math.inf
                )
                to_output[l] = max(to_output[l], tail)
                defined[l] = True

    undefined = [l for l in range(depth + 1) if not defined[l]]
    for l in undefined:
        to_output[l] = math.nan
    return LayerwiseProfile(
        from_input=from_input,
        to_output=to_output,
        undefined=undefined,
        norm=norm,
        epsilon=epsilon,
        perturbations=perturbations,
        seed=seed,
        overflowed=overflowed,
    )


def _wrap_shortcut(
    label: str,
    branch: float,
    mode: ResidualMode,
    nu: np.ndarray | None,
    heuristic: bool,
    caveats: tuple[str, ...],
) -> BoundFactor:
    if mode == ResidualMode.NONE:
        return BoundFactor(label, branch, branch, False, heuristic, caveats)
    if nu is None:
        scale = 1.0
    else:
        scale = float(np.max(np.abs(nu)))
    # A zero-weighted branch contributes nothing regardless of its own
    # bound, so the stage is exactly the identity.
    contribution = 0.0 if scale == 0.0 else scale * branch
    if mode == ResidualMode.DROPPATH:
        caveats = caveats + ("droppath-kept",)
    return BoundFactor(
        label, branch, 1.0 + contribution, True, heuristic, caveats
    )


def _attention_caveats(block: TransformerBlock) -> tuple[str, ...]:
    caveats: list[str] = []
    att = block.attention
    if att.kind == AttentionKind.DPA:
        caveats.append("dpa-unbounded")
    if att.kind == AttentionKind.L2A and not all(
        np.array_equal(att.w_q[h], att.w_k[h]) for h in range(att.heads)
    ):
        caveats.append("l2a-untied")
    if att.heads > 1:
        caveats.append("multihead-heuristic")
    return tuple(caveats)


def compose_network_bound(
    net: Network, head: np.ndarray | None = None
) -> BoundReport:
    """Analytic upper view of a network: product of per-stage bounds.

    Shortcut stages contribute 1 + bound(branch), weighted shortcuts
    1 + max|nu|·bound(branch), bare stages their raw bound; +inf
    propagates (any dot-product-attention network is unbounded).  An
    optional ``head`` matrix appends a final linear factor.
    """
    from .linalg import operator_norm  # local import to avoid cycle noise

    spec = net.spec
    factors: list[BoundFactor] = []
    for b, block in enumerate(net.blocks):
        if isinstance(block, TransformerBlock):
            caveats = _attention_caveats(block)
            branch = attn_lip_bound(block.attention, spec.n_tokens)
            if block.norm1 is not None:
                branch = branch * block.norm1.lip_bound()
            factors.append(
                _wrap_shortcut(
                    f"block{b}.attention",
                    branch,
                    spec.residual,
                    block.nu,
                    heuristic=block.attention.heads > 1,
                    caveats=caveats,
                )
            )
            branch = block.ffn.lip_bound()
            if block.norm2 is not None:
                branch = branch * block.norm2.lip_bound()
            factors.append(
                _wrap_shortcut(
                    f"block{b}.ffn",
                    branch,
                    spec.residual,
                    block.nu,
                    heuristic=False,
                    caveats=(),
                )
            )
        else:
            caveats = []
            heuristic = False
            branch = block.conv1.lip_bound() * block.conv2.lip_bound()
            if block.conv1.bound_is_heuristic or block.conv2.bound_is_heuristic:
                caveats.append("conv-overlap")
                heuristic = True
            for bn in (block.bn1, block.bn2):
                if bn is not None:
                    branch *= bn.lip_bound()
                    if bn.bound_is_heuristic:
                        heuristic = True
                        if "bn-train-approx" not in caveats:
                            caveats.append("bn-train-approx")
            factors.append(
                _wrap_shortcut(
                    f"block{b}",
                    branch,
                    spec.residual,
                    block.nu,
                    heuristic=heuristic,
                    caveats=tuple(caveats),
                )
            )
    if head is not None:
        sigma = operator_norm(np.asarray(head, dtype=np.float64))
        factors.append(BoundFactor("head", sigma, sigma, False))

    stages = [f.stage_bound for f in factors]
    if any(s == 0.0 for s in stages):
        total = 0.0
    else:
        total = 1.0
        for s in stages:
            total *= s
    seen: list[str] = []
    for f in factors:
        for c in f.caveats:
            if c not in seen:
                seen.append(c)
    return BoundReport(factors=factors, total=total, caveats=tuple(seen))


def droppath_bound(
    report: BoundReport,
    p: float,
    mode: str = "deterministic",
    seed: int = 0,
) -> float:
    """Bound of a DropPath network, from a composed report.

    Deterministic mode keeps every branch (the worst case, equal to the
    report's product).  Sampled mode draws one keep pattern: each droppable
    stage is removed with probability p, its factor replaced by 1; norm
    stages are never dropped.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if mode == "deterministic":
        return report.total
    if mode != "sampled":
        raise ValueError(f"unknown droppath bound mode: {mode!r}")
    rng = np.random.default_rng(np.random.SeedSequence((_check_seed(seed), 4)))
    total = 1.0
    zero_seen = False
    for f in report.factors:
        stage = f.stage_bound
        if f.droppable and rng.random() < p:
            stage = 1.0
        if stage == 0.0:
            zero_seen = True
            continue
        total *= stage
    return 0.0 if zero_seen else total


def check_principles(
    net: Network, x: np.ndarray, precision: str = "fp16"
) -> PrincipleReport:
    """Scan forward activations and backward Jacobian entries against R.

    A value violates the precision iff it exceeds the format's largest
    representable magnitude (or is already non-finite in float64).  The
    backward scan chains block Jacobians right to left, reporting the peak
    entry of each tail product; it is skipped on data larger than the
    materialized-Jacobian guard.
    """
    if precision not in PRECISION_RANGE:
        valid = ", ".join(sorted(PRECISION_RANGE))
        raise ValueError(f"unknown precision {precision!r}; expected: {valid}")
    threshold = PRECISION_RANGE[precision]

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        _, labels, peaks = net_forward_trace(net, x, allow_nonfinite=True)
        forward_violations = [
            i
            for i, v in enumerate(peaks)
            if not math.isfinite(v) or v > threshold
        ]

        max_abs_gradient: list[float] | None = None
        backward_violations: list[int] | None = None
        if net.data_size <= JACOBIAN_SIZE_GUARD:
            jacobians = net_block_jacobians(net, x)
            depth = len(jacobians)
            max_abs_gradient = [0.0] * depth
            suffix: np.ndarray | None = None
            for i in range(depth - 1, -1, -1):
                suffix = (
                    jacobians[i] if suffix is None else jacobians[i] @ suffix
                )
                peak = np.max(np.abs(suffix))
                max_abs_gradient[i] = (
                    float(peak) if np.isfinite(peak) else math.inf
                )
            backward_violations = [
                i
                for i, v in enumerate(max_abs_gradient)
                if not math.isfinite(v) or v > threshold
            ]

    return PrincipleReport(
        precision=precision,
        threshold=threshold,
        stage_labels=labels,
        max_abs_activation=peaks,
        forward_violations=forward_violations,
        max_abs_gradient=max_abs_gradient,
        backward_violations=backward_violations,
    )


def sandwich_check(
    estimate: LipschitzEstimate,
    report: BoundReport | float,
    slack: float = 1e-9,
) -> bool:
    """True iff the sampled lower view respects the analytic upper view.

    Passes vacuously when the bound is +inf; an overflowed (+inf) estimate
    against a finite bound fails.
    """
    k_u = report.total if isinstance(report, BoundReport) else float(report)
    if math.isinf(k_u) and k_u > 0:
        return True
    return estimate.value <= k_u + slack
