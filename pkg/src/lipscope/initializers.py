"""Weight initialization recipes and singular-value spectrum reports.

Six recipes, all returning an (n_out, n_in) matrix and all accepting a gain
multiplier applied last:

* Xavier uniform: U(-a, a) with a = sqrt(6 / (n_in + n_out)).
* Xavier normal: N(0, 2 / (n_in + n_out)).
* Kaiming: N(0, 2 / ((1 + a^2) n_in)) with a the negative slope.
* Orthogonal: Householder QR of a Gaussian draw, sign-fixed so the result
  is unique; columns (or rows, whichever side is shorter) are exactly
  orthonormal.
* Spectral: a Xavier-normal draw divided by its top singular value, so the
  spectral norm is exactly the gain.
* Depth-aware: Xavier normal scaled by 1/sqrt(L) or 1/L for an L-layer
  network.

Randomness comes from numpy's PCG64 generator.  The stream-splitting rule
for networks: the builder creates one ``SeedSequence(seed)`` and spawns one
child per weight matrix in construction order, so matrix k of a build is a
deterministic function of (seed, k) and adding layers never disturbs the
draws of earlier ones.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    DenseMatrix,
    ShapeError,
    full_singular_values,
    qr_orthonormalize,
)

__all__ = [
    "InitMethod",
    "InitSpec",
    "init_matrix",
    "matrix_streams",
    "SpectrumReport",
    "spectrum_report",
]


class InitMethod(enum.Enum):
    XAVIER_UNIFORM = "xavier_uniform"
    XAVIER_NORMAL = "xavier_normal"
    KAIMING = "kaiming"
    ORTHOGONAL = "orthogonal"
    SPECTRAL = "spectral"
    DEPTH_AWARE = "depth_aware"

    @classmethod
    def from_string(cls, name: str) -> "InitMethod":
        for method in cls:
            if method.value == name.lower():
                return method
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown init method {name!r}; expected: {valid}")


@dataclass(frozen=True)
class InitSpec:
    """Which recipe to draw from, plus its shape parameters.

    ``negative_slope`` only affects Kaiming; ``depth`` and ``depth_rule``
    ("sqrt" for 1/sqrt(L), "linear" for 1/L) only affect the depth-aware
    recipe.  ``gain`` multiplies the result of every recipe.
    """

    method: InitMethod = InitMethod.XAVIER_NORMAL
    gain: float = 1.0
    negative_slope: float = 0.0
    depth: int = 1
    depth_rule: str = "sqrt"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be at least 1, got {self.depth}")
        if self.depth_rule not in ("sqrt", "linear"):
            raise ValueError(
                f"depth_rule must be 'sqrt' or 'linear', got {self.depth_rule!r}"
            )


def _orthogonal_draw(
    rng: np.random.Generator, n_out: int, n_in: int
) -> DenseMatrix:
    g = rng.standard_normal((n_out, n_in))
    if n_out >= n_in:
        return qr_orthonormalize(g)
    return qr_orthonormalize(g.T).T


def init_matrix(
    spec: InitSpec,
    n_out: int,
    n_in: int,
    seed: int | np.random.SeedSequence | np.random.Generator = 0,
) -> DenseMatrix:
    """Draw an (n_out, n_in) weight matrix according to ``spec``.

    ``seed`` may be an integer, a SeedSequence (the network builder passes
    spawned children here) or an already-constructed Generator.
    """
    if n_out < 1 or n_in < 1:
        raise ShapeError(f"fan sizes must be positive, got ({n_out}, {n_in})")
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else np.random.default_rng(seed)
    )

    method = spec.method
    if method == InitMethod.XAVIER_UNIFORM:
        limit = math.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_out, n_in))
    elif method == InitMethod.XAVIER_NORMAL:
        std = math.sqrt(2.0 / (n_in + n_out))
        w = rng.normal(0.0, std, size=(n_out, n_in))
    elif method == InitMethod.KAIMING:
        std = math.sqrt(2.0 / ((1.0 + spec.negative_slope**2) * n_in))
        w = rng.normal(0.0, std, size=(n_out, n_in))
    elif method == InitMethod.ORTHOGONAL:
        w = _orthogonal_draw(rng, n_out, n_in)
    elif method == InitMethod.SPECTRAL:
        std = math.sqrt(2.0 / (n_in + n_out))
        w = rng.normal(0.0, std, size=(n_out, n_in))
        w = w / full_singular_values(w)[0]
    elif method == InitMethod.DEPTH_AWARE:
        std = math.sqrt(2.0 / (n_in + n_out))
        w = rng.normal(0.0, std, size=(n_out, n_in))
        if spec.depth_rule == "sqrt":
            w = w / math.sqrt(spec.depth)
        else:
            w = w / spec.depth
    else:
        raise ValueError(f"unhandled init method: {method!r}")

    return spec.gain * w


def matrix_streams(seed: int, count: int) -> list[np.random.SeedSequence]:
    """The per-matrix substreams for a build with ``count`` weight matrices.

    Matrix k always receives child k of ``SeedSequence(seed)``, numbered in
    construction order.
    """
    return np.random.SeedSequence(seed).spawn(count)


@dataclass
class SpectrumReport:
    """Histogram summary of a weight matrix's singular values."""

    singular_values: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    n_out: int
    n_in: int

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[0])

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])

    def fraction_below(self, threshold: float) -> float:
        return float(np.mean(self.singular_values < threshold))

    def csv_rows(self) -> list[tuple[float, float, int]]:
        """Histogram as (bin_left, bin_right, count) rows."""
        return [
            (float(self.bin_edges[i]), float(self.bin_edges[i + 1]), int(c))
            for i, c in enumerate(self.counts)
        ]


def spectrum_report(w: DenseMatrix, bins: int = 64) -> SpectrumReport:
    """Full singular spectrum of ``w`` with a fixed-width histogram."""
    if bins < 1:
        raise ValueError(f"bins must be at least 1, got {bins}")
    sigma = full_singular_values(w)
    lo, hi = float(sigma[-1]), float(sigma[0])
    if hi - lo <= bins * np.spacing(max(abs(lo), abs(hi), 1.0)):
        # Isometric initializers give a spectrum that is one point up to
        # roundoff; the histogram still needs distinguishable bin edges.
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(sigma, bins=bins, range=(lo, hi))
    return SpectrumReport(
        singular_values=sigma,
        bin_edges=edges,
        counts=counts,
        n_out=w.shape[0],
        n_in=w.shape[1],
    )
