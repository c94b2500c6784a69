"""Experiment network families: residual conv stacks and transformer stems.

Four families share one description type:

* ``resnet_conv``: blocks of x + BN(Conv(ReLU(BN(Conv(x))))) on an
  (H, W, C) image, kernel 3, stride 1, same padding by default.
* ``transformer_dpa`` / ``transformer_scsa`` / ``transformer_l2a``: blocks of
  self-attention and a ReLU FFN on a (D, N) token matrix, each sublayer a
  shortcut around a normalized branch, x + Norm(Sublayer(x)).  Normalizing
  the branch output (rather than the trunk sum) keeps the stack an exact
  identity at zero weights, which anchors the residual-toggle tests, and
  mirrors where the conv family's BatchNorm sits.  The L2A family ties key
  weights to query weights so its analytic bound is finite.

Inputs are square images; transformers see the H x W grid as a sequence of
N = H * W tokens with D features each.  Shortcut handling is selectable:
plain addition, weighted (per-channel nu, clamped like WeightedResidual),
rezero (nu initialized to zero), droppath (branches dropped at forward time
when a generator is supplied), or none.

Jacobians follow the denominator-layout convention of :mod:`.layers` on the
C-order flattening of the data arrays, and chain left to right in forward
order.  Materializing them is quadratic in the data size, so
:func:`net_jacobian_product` refuses inputs larger than
``JACOBIAN_SIZE_GUARD`` elements.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .attention import (
    AttentionKind,
    AttentionParams,
    NonFiniteValues,
    attn_forward,
)
from .initializers import InitMethod, InitSpec, init_matrix
from .layers import (
    WRS_CLAMP,
    BatchNorm,
    CenterNorm,
    Conv2D,
    FFN,
    LayerNorm,
    RMSNorm,
)
from .linalg import ShapeError

__all__ = [
    "JACOBIAN_SIZE_GUARD",
    "Family",
    "ResidualMode",
    "NetworkSpec",
    "Network",
    "TransformerBlock",
    "ConvBlock",
    "SizeGuardError",
    "build",
    "net_forward",
    "net_forward_from",
    "net_forward_trace",
    "net_block_outputs",
    "net_block_jacobians",
    "net_jacobian_product",
]

# Largest flattened data size for which Jacobians may be materialized.
JACOBIAN_SIZE_GUARD = 4096


class SizeGuardError(ValueError):
    """Raised when a materialized-Jacobian request exceeds the size guard."""


class Family(enum.Enum):
    RESNET_CONV = "resnet_conv"
    TRANSFORMER_DPA = "transformer_dpa"
    TRANSFORMER_SCSA = "transformer_scsa"
    TRANSFORMER_L2A = "transformer_l2a"

    @classmethod
    def from_string(cls, name: str) -> "Family":
        for fam in cls:
            if fam.value == name.lower():
                return fam
        valid = ", ".join(f.value for f in cls)
        raise ValueError(f"unknown family {name!r}; expected: {valid}")

    @property
    def is_transformer(self) -> bool:
        return self != Family.RESNET_CONV


class ResidualMode(enum.Enum):
    NONE = "none"
    PLAIN = "plain"
    WEIGHTED = "weighted"
    REZERO = "rezero"
    DROPPATH = "droppath"

    @classmethod
    def from_string(cls, name: str) -> "ResidualMode":
        for mode in cls:
            if mode.value == name.lower():
                return mode
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown residual mode {name!r}; expected: {valid}")


@dataclass(frozen=True)
class NetworkSpec:
    """Everything needed to build one experiment network deterministically.

    ``width`` is the model dimension for transformers and the channel count
    for the conv family.  ``input_side`` fixes the square spatial grid; a
    transformer sees input_side**2 tokens.  The 32x32 grid matches the
    full-scale experiments; the harness presets override width and grid
    explicitly, so the defaults here only matter for hand-built specs.
    """

    family: Family
    depth: int
    width: int = 256
    heads: int = 8
    ffn_expand: int = 4
    residual: ResidualMode = ResidualMode.PLAIN
    normalize: bool = True
    norm_kind: str = "auto"
    input_side: int = 32
    kernel: int = 3
    stride: int = 1
    bn_mode: str = "inference"
    norm_eps: float = 1e-5
    droppath_p: float = 0.0
    wrs_nu: float | None = None
    scsa_nu: float = 1.0
    scsa_tau: float = 5.0
    scsa_eps: float = 1e-5
    init: InitSpec = field(
        default_factory=lambda: InitSpec(method=InitMethod.XAVIER_NORMAL, gain=2.0)
    )

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be at least 1, got {self.depth}")
        if self.width < 1 or self.input_side < 1:
            raise ValueError("width and input_side must be positive")
        if self.family.is_transformer:
            if self.heads < 1 or self.width % self.heads != 0:
                raise ValueError(
                    f"width {self.width} must be divisible by heads {self.heads}"
                )
            if self.ffn_expand < 1:
                raise ValueError("ffn_expand must be at least 1")
        if not 0.0 <= self.droppath_p < 1.0:
            raise ValueError(
                f"droppath_p must lie in [0, 1), got {self.droppath_p}"
            )
        if self.residual == ResidualMode.WEIGHTED:
            nu = 1.0 / self.depth if self.wrs_nu is None else self.wrs_nu
            if abs(nu) > WRS_CLAMP:
                raise ValueError(
                    f"weighted-residual nu must satisfy |nu| <= {WRS_CLAMP}"
                )
        if self.bn_mode not in ("inference", "train"):
            raise ValueError(f"unknown bn_mode: {self.bn_mode!r}")
        if (
            not self.family.is_transformer
            and self.stride != 1
            and self.residual != ResidualMode.NONE
        ):
            raise ValueError(
                "stride > 1 shrinks the grid, so the shortcut no longer "
                "matches the branch shape; use residual=none"
            )
        if self.norm_kind not in ("auto", "ln", "bn", "rmsnorm", "centernorm"):
            raise ValueError(f"unknown norm_kind: {self.norm_kind!r}")
        if self.family.is_transformer:
            if self.norm_kind == "bn":
                raise ValueError(
                    "transformer stems use vector normalization; norm_kind "
                    "must be ln, rmsnorm, or centernorm"
                )
        elif self.norm_kind not in ("auto", "bn"):
            raise ValueError(
                "conv blocks normalize per channel over the batch; only "
                "norm_kind bn is supported"
            )

    @property
    def n_tokens(self) -> int:
        return self.input_side * self.input_side

    @property
    def data_shape(self) -> tuple[int, ...]:
        if self.family.is_transformer:
            return (self.width, self.n_tokens)
        return (self.input_side, self.input_side, self.width)


@dataclass
class TransformerBlock:
    attention: AttentionParams
    ffn: FFN
    norm1: LayerNorm | RMSNorm | CenterNorm | None
    norm2: LayerNorm | RMSNorm | CenterNorm | None
    nu: np.ndarray | None  # per-feature shortcut weights; None for plain/none


@dataclass
class ConvBlock:
    conv1: Conv2D
    bn1: BatchNorm | None
    conv2: Conv2D
    bn2: BatchNorm | None
    nu: np.ndarray | None  # per-channel shortcut weights


@dataclass
class Network:
    spec: NetworkSpec
    blocks: list

    @property
    def data_shape(self) -> tuple[int, ...]:
        return self.spec.data_shape

    @property
    def data_size(self) -> int:
        return int(np.prod(self.spec.data_shape))

    def named_weights(self) -> list[tuple[str, np.ndarray]]:
        """Every trainable weight matrix, in construction order."""
        out: list[tuple[str, np.ndarray]] = []
        for b, block in enumerate(self.blocks):
            if isinstance(block, TransformerBlock):
                att = block.attention
                for h in range(att.heads):
                    out.append((f"block{b}.attn.q{h}", att.w_q[h]))
                    if att.w_k is not att.w_q:
                        out.append((f"block{b}.attn.k{h}", att.w_k[h]))
                    out.append((f"block{b}.attn.v{h}", att.w_v[h]))
                out.append((f"block{b}.ffn.w1", block.ffn.w1))
                out.append((f"block{b}.ffn.w2", block.ffn.w2))
            else:
                out.append((f"block{b}.conv1", block.conv1.kernel))
                out.append((f"block{b}.conv2", block.conv2.kernel))
        return out


def _shortcut_weights(spec: NetworkSpec) -> np.ndarray | None:
    if spec.residual == ResidualMode.WEIGHTED:
        nu = 1.0 / spec.depth if spec.wrs_nu is None else spec.wrs_nu
        return np.full(spec.width, float(nu))
    if spec.residual == ResidualMode.REZERO:
        return np.zeros(spec.width)
    return None


def _make_token_norm(spec: NetworkSpec) -> LayerNorm | RMSNorm | CenterNorm:
    """Build one normalization stage for the transformer stem.

    The stage standardizes each token of a branch output over its feature
    axis (columns of the (D, N) activation), the usual per-token reading of
    LayerNorm in a transformer.  Because the stage sits on the branch, not
    on the trunk, it never rescales the running token matrix itself, so the
    diversity of the tokens survives to any depth and the attention scores
    keep their spread.

    Each stage reuses a per-vector normalizer over length-D columns.  Those
    layers divide by the smoothed vector norm, and the per-coordinate
    standardization this stem wants is the exact same map under the
    reparameterization gamma -> sqrt(D) * gamma, eps -> D * eps:

        sqrt(D) * y / sqrt(||y||^2 + D*eps) = y / sqrt(mean(y^2) + eps)

    so one forward/Jacobian/bound implementation serves both, and the
    Lipschitz factor is unchanged (sqrt(D) * max|gamma| / sqrt(D*eps) =
    max|gamma| / sqrt(eps), a true sup).  CenterNorm only recenters, so
    it needs no rescaling.
    """
    d = spec.width
    gamma = math.sqrt(d) * np.ones(d)
    beta = np.zeros(d)
    if spec.norm_kind in ("auto", "ln"):
        return LayerNorm(gamma, beta, eps=d * spec.norm_eps)
    if spec.norm_kind == "rmsnorm":
        return RMSNorm(gamma, beta, eps=d * spec.norm_eps)
    return CenterNorm(np.ones(d), beta)


def build(spec: NetworkSpec, seed: int = 0) -> Network:
    """Materialize the network described by ``spec``.

    One substream of ``SeedSequence(seed)`` is spawned per weight matrix in
    construction order, so a deeper network shares its first blocks' draws
    with a shallower one built from the same seed.
    """
    root = np.random.SeedSequence(seed)

    def next_rng() -> np.random.Generator:
        return np.random.default_rng(root.spawn(1)[0])

    blocks: list = []
    d = spec.width
    if spec.family.is_transformer:
        head_dim = d // spec.heads
        kind = {
            Family.TRANSFORMER_DPA: AttentionKind.DPA,
            Family.TRANSFORMER_SCSA: AttentionKind.SCSA,
            Family.TRANSFORMER_L2A: AttentionKind.L2A,
        }[spec.family]
        hidden = spec.ffn_expand * d
        for _ in range(spec.depth):
            w_q = np.stack(
                [init_matrix(spec.init, head_dim, d, next_rng()) for _ in range(spec.heads)]
            )
            if kind == AttentionKind.L2A:
                # Tied keys keep the analytic L2A bound finite.
                w_k = w_q
            else:
                w_k = np.stack(
                    [init_matrix(spec.init, head_dim, d, next_rng()) for _ in range(spec.heads)]
                )
            w_v = np.stack(
                [init_matrix(spec.init, head_dim, d, next_rng()) for _ in range(spec.heads)]
            )
            attention = AttentionParams(
                kind=kind,
                w_q=w_q,
                w_k=w_k,
                w_v=w_v,
                nu=spec.scsa_nu,
                tau=spec.scsa_tau,
                eps=spec.scsa_eps,
            )
            ffn = FFN(
                w1=init_matrix(spec.init, hidden, d, next_rng()),
                b1=np.zeros(hidden),
                w2=init_matrix(spec.init, d, hidden, next_rng()),
                b2=np.zeros(d),
            )
            norm1 = norm2 = None
            if spec.normalize:
                norm1 = _make_token_norm(spec)
                norm2 = _make_token_norm(spec)
            blocks.append(
                TransformerBlock(
                    attention=attention,
                    ffn=ffn,
                    norm1=norm1,
                    norm2=norm2,
                    nu=_shortcut_weights(spec),
                )
            )
    else:
        k = spec.kernel
        pad = (k - 1) // 2 if spec.stride == 1 else 0
        for _ in range(spec.depth):
            convs = []
            for _ in range(2):
                patch_t = init_matrix(spec.init, d, k * k * d, next_rng())
                kernel = patch_t.T.reshape(k, k, d, d)
                convs.append(Conv2D(kernel=kernel, stride=spec.stride, padding=pad))
            bn1 = bn2 = None
            if spec.normalize:
                bn1 = BatchNorm(
                    np.ones(d), np.zeros(d), eps=spec.norm_eps, mode=spec.bn_mode
                )
                bn2 = BatchNorm(
                    np.ones(d), np.zeros(d), eps=spec.norm_eps, mode=spec.bn_mode
                )
            blocks.append(
                ConvBlock(
                    conv1=convs[0],
                    bn1=bn1,
                    conv2=convs[1],
                    bn2=bn2,
                    nu=_shortcut_weights(spec),
                )
            )
    return Network(spec=spec, blocks=blocks)


def _check_finite(x: np.ndarray, label: str, allow: bool) -> None:
    if not allow and not np.all(np.isfinite(x)):
        raise NonFiniteValues(
            f"non-finite activations after {label}", where=label
        )


def _norm_columns(
    norm: LayerNorm | RMSNorm | CenterNorm, x: np.ndarray
) -> np.ndarray:
    """Apply a per-vector normalization layer to every column of x.

    Columns of the (D, N) activation are tokens, so this is the stem's
    per-token standardization; the column length (and the normalizer's
    dimension) is the feature count.
    """
    if isinstance(norm, LayerNorm):
        y = x - x.mean(axis=0, keepdims=True)
        s = np.sum(y * y, axis=0) + norm.eps
        z = y / np.sqrt(s)[None, :]
    elif isinstance(norm, RMSNorm):
        s = np.sum(x * x, axis=0) + norm.eps
        z = x / np.sqrt(s)[None, :]
    else:
        d = x.shape[0]
        z = (d / (d - 1)) * (x - x.mean(axis=0, keepdims=True))
    return norm.gamma[:, None] * z + norm.beta[:, None]


def _ffn_columns(ffn: FFN, x: np.ndarray) -> np.ndarray:
    hidden = np.maximum(ffn.w1 @ x + ffn.b1[:, None], 0.0)
    return ffn.w2 @ hidden + ffn.b2[:, None]


def _combine(
    x: np.ndarray,
    branch: np.ndarray,
    mode: ResidualMode,
    nu: np.ndarray | None,
    keep: bool,
    channel_axis: int,
) -> np.ndarray:
    if mode == ResidualMode.NONE:
        return branch
    if not keep:
        return x
    if nu is None:
        return x + branch
    shape = [1] * branch.ndim
    shape[channel_axis] = nu.shape[0]
    return x + nu.reshape(shape) * branch


class _StageRecorder:
    """Collects per-stage peak activation magnitudes during a forward pass."""

    def __init__(self):
        self.labels: list[str] = []
        self.max_abs: list[float] = []

    def note(self, label: str, x: np.ndarray) -> None:
        self.labels.append(label)
        self.max_abs.append(float(np.max(np.abs(x))))


def _forward_walk(
    net: Network,
    x: np.ndarray,
    allow_nonfinite: bool,
    droppath_rng: np.random.Generator | None,
    recorder: _StageRecorder | None,
    keep_blocks: bool,
    first_block: int = 0,
) -> tuple[np.ndarray, list[np.ndarray]]:
    spec = net.spec
    x = np.asarray(x, dtype=np.float64)
    if x.shape != spec.data_shape:
        raise ShapeError(
            f"expected input of shape {spec.data_shape}, got {x.shape}"
        )
    if recorder is not None:
        recorder.note("input", x)
    block_outputs = [x.copy()] if keep_blocks else []

    def keep_branch() -> bool:
        if spec.residual != ResidualMode.DROPPATH or droppath_rng is None:
            return True
        return droppath_rng.random() >= spec.droppath_p

    for b, block in enumerate(net.blocks[first_block:], start=first_block):
        if isinstance(block, TransformerBlock):
            branch = attn_forward(
                block.attention, x, allow_nonfinite=allow_nonfinite
            )
            if block.norm1 is not None:
                branch = _norm_columns(block.norm1, branch)
            x = _combine(
                x, branch, spec.residual, block.nu, keep_branch(), channel_axis=0
            )
            _check_finite(x, f"block{b}.attention", allow_nonfinite)
            if recorder is not None:
                recorder.note(f"block{b}.attention", x)
            branch = _ffn_columns(block.ffn, x)
            if block.norm2 is not None:
                branch = _norm_columns(block.norm2, branch)
            x = _combine(
                x, branch, spec.residual, block.nu, keep_branch(), channel_axis=0
            )
            _check_finite(x, f"block{b}.ffn", allow_nonfinite)
            if recorder is not None:
                recorder.note(f"block{b}.ffn", x)
        else:
            branch = block.conv1.forward(x)
            if block.bn1 is not None:
                branch = block.bn1.forward(branch)
            branch = np.maximum(branch, 0.0)
            branch = block.conv2.forward(branch)
            if block.bn2 is not None:
                branch = block.bn2.forward(branch)
            x = _combine(
                x, branch, spec.residual, block.nu, keep_branch(), channel_axis=2
            )
            _check_finite(x, f"block{b}", allow_nonfinite)
            if recorder is not None:
                recorder.note(f"block{b}", x)
        if keep_blocks:
            block_outputs.append(x.copy())
    return x, block_outputs


def net_forward(
    net: Network,
    x: np.ndarray,
    allow_nonfinite: bool = False,
    droppath_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Run the network on one data array.

    With ``allow_nonfinite`` unset, any non-finite intermediate raises
    :class:`~lipscope.attention.NonFiniteValues` naming the block; estimator
    code sets it and accounts for overflow itself.  Droppath branches are
    kept deterministically unless a generator is supplied.
    """
    out, _ = _forward_walk(
        net, x, allow_nonfinite, droppath_rng, recorder=None, keep_blocks=False
    )
    return out


def net_forward_from(
    net: Network,
    x: np.ndarray,
    first_block: int,
    allow_nonfinite: bool = False,
) -> np.ndarray:
    """Run only the tail of the network, starting at block ``first_block``.

    ``x`` is interpreted as the activation entering that block; passing 0
    reproduces :func:`net_forward` and passing the depth returns ``x``
    unchanged.
    """
    if not 0 <= first_block <= len(net.blocks):
        raise IndexError(
            f"first_block must lie in [0, {len(net.blocks)}], got {first_block}"
        )
    out, _ = _forward_walk(
        net,
        x,
        allow_nonfinite,
        None,
        recorder=None,
        keep_blocks=False,
        first_block=first_block,
    )
    return out


def net_forward_trace(
    net: Network,
    x: np.ndarray,
    allow_nonfinite: bool = False,
) -> tuple[np.ndarray, list[str], list[float]]:
    """Forward pass that also reports each stage's peak |activation|."""
    recorder = _StageRecorder()
    out, _ = _forward_walk(
        net, x, allow_nonfinite, None, recorder=recorder, keep_blocks=False
    )
    return out, recorder.labels, recorder.max_abs


def net_block_outputs(
    net: Network,
    x: np.ndarray,
    allow_nonfinite: bool = False,
) -> list[np.ndarray]:
    """Activations after each block, starting with the input itself."""
    _, outputs = _forward_walk(
        net, x, allow_nonfinite, None, recorder=None, keep_blocks=True
    )
    return outputs


def _token_blockdiag(
    per_token: list[np.ndarray], d: int, n: int
) -> np.ndarray:
    """Assemble per-token (d x d) Jacobians on the C-order (d, n) ravel."""
    full = np.zeros((d * n, d * n))
    base = np.arange(d) * n
    for tok, jac in enumerate(per_token):
        idx = base + tok
        full[np.ix_(idx, idx)] = jac
    return full


def _attention_jacobian(
    params: AttentionParams, x: np.ndarray
) -> np.ndarray:
    """Numeric Jacobian of the attention map on the C-order ravel."""
    size = x.size
    jac = np.empty((size, size))
    step = 1e-6
    direction = np.zeros_like(x)
    flat = direction.ravel()
    for p in range(size):
        flat[p] = 1.0
        plus = attn_forward(params, x + step * direction)
        minus = attn_forward(params, x - step * direction)
        jac[p, :] = ((plus - minus) / (2.0 * step)).ravel()
        flat[p] = 0.0
    return jac


def _residual_wrap(
    branch_jac: np.ndarray,
    mode: ResidualMode,
    nu: np.ndarray | None,
    nu_ravel: np.ndarray | None,
) -> np.ndarray:
    if mode == ResidualMode.NONE:
        return branch_jac
    eye = np.eye(branch_jac.shape[0])
    if nu is None:
        return eye + branch_jac
    return eye + branch_jac * nu_ravel[None, :]


def net_block_jacobians(net: Network, x: np.ndarray) -> list[np.ndarray]:
    """Denominator-layout Jacobian of each block at its own input.

    Analytic everywhere except the attention map, which is differenced
    numerically.  Requires the flattened data size to be at most
    ``JACOBIAN_SIZE_GUARD``; droppath branches are treated as kept.
    """
    spec = net.spec
    size = net.data_size
    if size > JACOBIAN_SIZE_GUARD:
        raise SizeGuardError(
            f"data size {size} exceeds the materialized-Jacobian guard "
            f"({JACOBIAN_SIZE_GUARD}); use a smaller network"
        )
    x = np.asarray(x, dtype=np.float64)
    if x.shape != spec.data_shape:
        raise ShapeError(
            f"expected input of shape {spec.data_shape}, got {x.shape}"
        )

    jacobians: list[np.ndarray] = []
    for block in net.blocks:
        if isinstance(block, TransformerBlock):
            d, n = spec.data_shape
            nu_ravel = (
                np.repeat(block.nu, n) if block.nu is not None else None
            )
            branch = attn_forward(block.attention, x)
            j_branch = _attention_jacobian(block.attention, x)
            if block.norm1 is not None:
                per_tok = [
                    block.norm1.jacobian(branch[:, t]) for t in range(n)
                ]
                j_branch = j_branch @ _token_blockdiag(per_tok, d, n)
                branch = _norm_columns(block.norm1, branch)
            j_block = _residual_wrap(j_branch, spec.residual, block.nu, nu_ravel)
            x = _combine(x, branch, spec.residual, block.nu, True, channel_axis=0)

            branch = _ffn_columns(block.ffn, x)
            per_tok = [block.ffn.jacobian(x[:, t]) for t in range(n)]
            j_branch = _token_blockdiag(per_tok, d, n)
            if block.norm2 is not None:
                per_tok = [
                    block.norm2.jacobian(branch[:, t]) for t in range(n)
                ]
                j_branch = j_branch @ _token_blockdiag(per_tok, d, n)
                branch = _norm_columns(block.norm2, branch)
            j_block = j_block @ _residual_wrap(
                j_branch, spec.residual, block.nu, nu_ravel
            )
            x = _combine(x, branch, spec.residual, block.nu, True, channel_axis=0)
        else:
            h, w, c = spec.data_shape
            nu_ravel = (
                np.tile(block.nu, h * w) if block.nu is not None else None
            )
            t = x
            j_branch = block.conv1.jacobian(t)
            t = block.conv1.forward(t)
            if block.bn1 is not None:
                j_branch = j_branch @ block.bn1.jacobian(t)
                t = block.bn1.forward(t)
            relu_mask = (t > 0.0).astype(np.float64).ravel()
            j_branch = j_branch * relu_mask[None, :]
            t = np.maximum(t, 0.0)
            j_branch = j_branch @ block.conv2.jacobian(t)
            t = block.conv2.forward(t)
            if block.bn2 is not None:
                j_branch = j_branch @ block.bn2.jacobian(t)
                t = block.bn2.forward(t)
            j_block = _residual_wrap(j_branch, spec.residual, block.nu, nu_ravel)
            x = _combine(x, t, spec.residual, block.nu, True, channel_axis=2)
        jacobians.append(j_block)
    return jacobians


def net_jacobian_product(net: Network, x: np.ndarray) -> np.ndarray:
    """Jacobian of the whole network at ``x``, chained block by block.

    Denominator layout on the C-order ravel: entry (p, q) is the derivative
    of output component q with respect to input component p, and the result
    is the left-to-right product of the per-block Jacobians in forward
    order.
    """
    product: np.ndarray | None = None
    for jac in net_block_jacobians(net, x):
        product = jac if product is None else product @ jac
    assert product is not None  # depth >= 1 is enforced by NetworkSpec
    return product
