"""Scripted landscape sweeps: depth, normalization, scale, and norm studies.

Each experiment estimates sampled slopes K_s (and composed bounds K_u) over
a grid, one row per (family, toggle, grid value, seed), and emits a flat
CSV.  Overflow is data: a diverging cell lands in the table as an "inf"
sentinel with its flag set, and never aborts a sweep.

Depth sweeps exploit prefix-stable construction: a depth-16 network built
from a seed shares its first d blocks, bit for bit, with the depth-d
network from the same seed, so one forward pass through the deepest
network yields the estimator samples of every smaller depth.  The rows are
identical to what per-depth runs would produce, just cheaper.

Cells run on a thread pool sized by the LIPSCOPE_THREADS environment
variable (default: logical cores); rows are ordered by their position in
the configured grid, not by completion, so parallel and serial runs emit
byte-identical files.
"""

from __future__ import annotations

import enum
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__ as _tool_version
from .estimation import (
    BoundReport,
    EstimatorSettings,
    compose_network_bound,
    estimate_K_multi,
    estimate_layerwise,
    network_function,
)
from .initializers import InitMethod, InitSpec, init_matrix, spectrum_report
from .linalg import (
    NormKind,
    format_quantity,
    full_singular_values,
    vector_norm,
)
from .networks import (
    Family,
    Network,
    NetworkSpec,
    ResidualMode,
    build,
    net_block_outputs,
)

__all__ = [
    "Experiment",
    "SweepConfig",
    "SweepRow",
    "SweepTable",
    "InitSpectrumRow",
    "InitSpectrumTable",
    "SWEEP_CSV_HEADER",
    "INIT_CSV_HEADER",
    "worker_count",
    "run_sweep",
    "run_init_spectrum",
    "emit_csv",
    "emit_init_csv",
    "parse_csv",
    "merge_tables",
    "desk_configs",
    "paper_configs",
    "run_all_paper_figures",
]

SWEEP_CSV_HEADER = (
    "family",
    "toggle",
    "grid_name",
    "grid_value",
    "seed",
    "norm",
    "K_s",
    "K_u",
    "overflow_flag",
)

INIT_CSV_HEADER = (
    "method",
    "gain",
    "n_out",
    "n_in",
    "seed",
    "sigma_max",
    "sigma_min",
    "frac_below_0.1",
)


class Experiment(enum.Enum):
    DEPTH_RESIDUAL = "depth_residual"
    DEPTH_NORM = "depth_norm"
    GAIN = "gain"
    EPSILON = "epsilon"
    HIDDEN = "hidden"
    INPUT = "input"
    LAYERWISE = "layerwise"
    NORMS = "norms"

    @classmethod
    def from_string(cls, name: str) -> "Experiment":
        for exp in cls:
            if exp.value == name.lower():
                return exp
        valid = ", ".join(e.value for e in cls)
        raise ValueError(f"unknown experiment {name!r}; expected: {valid}")


@dataclass(frozen=True)
class SweepConfig:
    """One experiment's grid, families, sampling budget, and seeds."""

    experiment: Experiment
    families: tuple[Family, ...]
    grid: tuple
    base: NetworkSpec
    settings: EstimatorSettings = field(default_factory=EstimatorSettings)
    seeds: tuple[int, ...] = (0,)
    norms: tuple[NormKind, ...] = (NormKind.L2,)

    def __post_init__(self):
        if not self.families:
            raise ValueError("at least one family is required")
        if not self.grid:
            raise ValueError("the value grid must be nonempty")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.experiment == Experiment.EPSILON and any(
            fam != Family.TRANSFORMER_SCSA for fam in self.families
        ):
            raise ValueError(
                "the epsilon experiment varies the smoothing term of "
                "scaled-cosine attention; families must be transformer_scsa"
            )
        if self.experiment in (
            Experiment.DEPTH_RESIDUAL,
            Experiment.DEPTH_NORM,
            Experiment.HIDDEN,
            Experiment.INPUT,
        ):
            if any(int(v) != v or v < 1 for v in self.grid):
                raise ValueError(
                    f"{self.experiment.value} grid values must be positive "
                    f"integers, got {self.grid}"
                )
        if self.experiment in (Experiment.GAIN, Experiment.EPSILON) and any(
            not v > 0 for v in self.grid
        ):
            raise ValueError(
                f"{self.experiment.value} grid values must be positive"
            )
        if self.experiment == Experiment.LAYERWISE and len(self.grid) != 1:
            raise ValueError(
                "the layerwise experiment takes a single-depth grid"
            )


@dataclass(frozen=True)
class SweepRow:
    family: str
    toggle: str
    grid_name: str
    grid_value: object
    seed: int
    norm: str
    k_s: float
    k_u: float
    overflow: bool

    def to_csv_fields(self) -> list[str]:
        return [
            self.family,
            self.toggle,
            self.grid_name,
            str(self.grid_value),
            str(self.seed),
            self.norm,
            format_quantity(self.k_s),
            format_quantity(self.k_u),
            "1" if self.overflow else "0",
        ]


@dataclass
class SweepTable:
    experiment: str
    rows: list[SweepRow]
    duration_seconds: float = 0.0


@dataclass(frozen=True)
class InitSpectrumRow:
    method: str
    gain: float
    n_out: int
    n_in: int
    seed: int
    sigma_max: float
    sigma_min: float
    frac_below_tenth: float

    def to_csv_fields(self) -> list[str]:
        return [
            self.method,
            repr(self.gain),
            str(self.n_out),
            str(self.n_in),
            str(self.seed),
            repr(self.sigma_max),
            repr(self.sigma_min),
            repr(self.frac_below_tenth),
        ]


@dataclass
class InitSpectrumTable:
    rows: list[InitSpectrumRow]
    duration_seconds: float = 0.0


def worker_count() -> int:
    """Pool size: LIPSCOPE_THREADS if set, else the logical core count."""
    raw = os.environ.get("LIPSCOPE_THREADS")
    if raw is not None:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ValueError(
                f"LIPSCOPE_THREADS must be an integer, got {raw!r}"
            ) from exc
        if n < 1:
            raise ValueError(f"LIPSCOPE_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def _run_tasks(tasks: list[Callable[[], list[SweepRow]]]) -> list[SweepRow]:
    workers = min(worker_count(), len(tasks)) or 1
    if workers == 1:
        chunks = [task() for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda task: task(), tasks))
    return [row for chunk in chunks for row in chunk]


def _block_stage_products(report: BoundReport, depth: int) -> list[float]:
    """Collapse a bound report into one multiplicative factor per block."""
    per_block = len(report.factors) // depth
    products = []
    for b in range(depth):
        prod = 1.0
        for f in report.factors[b * per_block : (b + 1) * per_block]:
            prod *= f.stage_bound
        products.append(prod)
    return products


def _prefix_bounds(report: BoundReport, depth: int) -> list[float]:
    """Composed bound of the first l blocks, for l = 0..depth."""
    products = _block_stage_products(report, depth)
    out = [1.0]
    for p in products:
        out.append(out[-1] * p)
    return out


def _suffix_bounds(report: BoundReport, depth: int) -> list[float]:
    """Composed bound of the tail from block l, for l = 0..depth."""
    products = _block_stage_products(report, depth)
    out = [1.0]
    for p in reversed(products):
        out.append(out[-1] * p)
    out.reverse()
    return out


@dataclass
class _DepthScanCell:
    """Per-depth estimator state for the shared-prefix scan."""

    best: float = 0.0
    arg: tuple[int, int] = (-1, -1)
    overflowed: bool = False


def _depth_grid_estimates(
    net: Network,
    depths: Sequence[int],
    settings: EstimatorSettings,
    seed: int,
) -> dict[int, tuple[float, bool]]:
    """Sampled slopes of every depth prefix of ``net`` at once.

    Produces exactly the values a separate estimate_K per depth would:
    the prefix blocks of the deep network are bit-identical to the
    shallower networks built from the same seed, and the base-point and
    direction streams depend only on the seed.  Per-depth overflow
    freezes that depth's cell at +inf, mirroring the standalone early
    stop.
    """
    from .estimation import _base_rng, _direction_rng  # shared streams

    shape = net.data_shape
    cells = {d: _DepthScanCell() for d in depths}
    drawn = _base_rng(seed).standard_normal(
        (settings.base_points,) + shape
    )
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for b in range(settings.base_points):
            if all(c.overflowed for c in cells.values()):
                break
            x = drawn[b]
            base_blocks = net_block_outputs(net, x, allow_nonfinite=True)
            base_ok = {
                d: bool(np.all(np.isfinite(base_blocks[d]))) for d in depths
            }
            for d in depths:
                cell = cells[d]
                if not cell.overflowed and not base_ok[d]:
                    cell.overflowed = True
                    cell.arg = (b, -1)
            rng = _direction_rng(seed, b)
            for t in range(settings.perturbations):
                z = rng.standard_normal(shape)
                x_hat = x + settings.epsilon * z
                pert_blocks = net_block_outputs(
                    net, x_hat, allow_nonfinite=True
                )
                delta_in = (x_hat - x).ravel()
                den0 = vector_norm(delta_in, settings.norm)
                if den0 == 0.0:
                    continue
                for d in depths:
                    cell = cells[d]
                    if cell.overflowed:
                        continue
                    diff = (pert_blocks[d] - base_blocks[d]).ravel()
                    if not np.all(np.isfinite(diff)):
                        cell.overflowed = True
                        cell.arg = (b, t)
                        continue
                    ratio = vector_norm(diff, settings.norm) / den0
                    if ratio > cell.best:
                        cell.best = ratio
                        cell.arg = (b, t)
    return {
        d: (math.inf if cells[d].overflowed else cells[d].best, cells[d].overflowed)
        for d in depths
    }


def _spec_for(
    cfg: SweepConfig, family: Family, **overrides
) -> NetworkSpec:
    base = cfg.base
    norm_kind = base.norm_kind
    if family.is_transformer and norm_kind == "bn":
        norm_kind = "auto"
    if not family.is_transformer and norm_kind not in ("auto", "bn"):
        norm_kind = "auto"
    fields = dict(
        family=family,
        depth=base.depth,
        width=base.width,
        heads=base.heads,
        ffn_expand=base.ffn_expand,
        residual=base.residual,
        normalize=base.normalize,
        norm_kind=norm_kind,
        input_side=base.input_side,
        kernel=base.kernel,
        stride=base.stride,
        bn_mode=base.bn_mode,
        norm_eps=base.norm_eps,
        droppath_p=base.droppath_p,
        wrs_nu=base.wrs_nu,
        scsa_nu=base.scsa_nu,
        scsa_tau=base.scsa_tau,
        scsa_eps=base.scsa_eps,
        init=base.init,
    )
    fields.update(overrides)
    return NetworkSpec(**fields)


def _estimate_cell(
    net: Network, settings: EstimatorSettings, seed: int, norms
) -> dict[NormKind, tuple[float, bool]]:
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        results = estimate_K_multi(
            network_function(net),
            net.data_shape,
            list(norms),
            base_points=settings.base_points,
            perturbations=settings.perturbations,
            epsilon=settings.epsilon,
            seed=seed,
        )
    return {
        kind: (est.value, est.overflowed) for kind, est in results.items()
    }


def _depth_task(
    cfg: SweepConfig,
    family: Family,
    toggle_value: str,
    spec: NetworkSpec,
    seed: int,
) -> Callable[[], list[SweepRow]]:
    depths = [int(v) for v in cfg.grid]
    norm = cfg.settings.norm

    def task() -> list[SweepRow]:
        net = build(spec, seed)
        estimates = _depth_grid_estimates(net, depths, cfg.settings, seed)
        report = compose_network_bound(net)
        prefixes = _prefix_bounds(report, spec.depth)
        rows = []
        for d in depths:
            k_s, overflowed = estimates[d]
            rows.append(
                SweepRow(
                    family=family.value,
                    toggle=toggle_value,
                    grid_name="depth",
                    grid_value=d,
                    seed=seed,
                    norm=norm.value,
                    k_s=k_s,
                    k_u=prefixes[d],
                    overflow=overflowed,
                )
            )
        return rows

    return task


def _single_cell_task(
    cfg: SweepConfig,
    family: Family,
    grid_name: str,
    grid_value,
    spec: NetworkSpec,
    seed: int,
) -> Callable[[], list[SweepRow]]:
    def task() -> list[SweepRow]:
        net = build(spec, seed)
        cell = _estimate_cell(net, cfg.settings, seed, cfg.norms)
        report = compose_network_bound(net)
        rows = []
        for kind in cfg.norms:
            k_s, overflowed = cell[kind]
            k_u = report.total if kind == NormKind.L2 else math.inf
            rows.append(
                SweepRow(
                    family=family.value,
                    toggle="-",
                    grid_name=grid_name,
                    grid_value=grid_value,
                    seed=seed,
                    norm=kind.value,
                    k_s=k_s,
                    k_u=k_u,
                    overflow=overflowed,
                )
            )
        return rows

    return task


def _layerwise_task(
    cfg: SweepConfig, family: Family, spec: NetworkSpec, seed: int
) -> Callable[[], list[SweepRow]]:
    from .estimation import _base_rng

    norm = cfg.settings.norm

    def task() -> list[SweepRow]:
        net = build(spec, seed)
        x = _base_rng(seed).standard_normal(net.data_shape)
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            profile = estimate_layerwise(
                net,
                x,
                perturbations=cfg.settings.perturbations,
                epsilon=cfg.settings.epsilon,
                norm=norm,
                seed=seed,
            )
        report = compose_network_bound(net)
        prefixes = _prefix_bounds(report, spec.depth)
        suffixes = _suffix_bounds(report, spec.depth)
        rows = []
        for l in range(profile.depth + 1):
            rows.append(
                SweepRow(
                    family=family.value,
                    toggle="from_input",
                    grid_name="block",
                    grid_value=l,
                    seed=seed,
                    norm=norm.value,
                    k_s=profile.from_input[l],
                    k_u=prefixes[l],
                    overflow=not math.isfinite(profile.from_input[l]),
                )
            )
        for l in range(profile.depth + 1):
            value = profile.to_output[l]
            rows.append(
                SweepRow(
                    family=family.value,
                    toggle="to_output",
                    grid_name="block",
                    grid_value=l,
                    seed=seed,
                    norm=norm.value,
                    k_s=value,
                    k_u=suffixes[l],
                    overflow=not math.isfinite(value),
                )
            )
        return rows

    return task


def run_sweep(cfg: SweepConfig) -> SweepTable:
    """Execute one experiment grid; one row per (family, toggle, value, seed).

    Deterministic per seed: cells are pure functions of (config, seed), and
    the output order follows the configured grids, never thread timing.
    """
    start = time.perf_counter()
    tasks: list[Callable[[], list[SweepRow]]] = []
    exp = cfg.experiment

    if exp in (Experiment.DEPTH_RESIDUAL, Experiment.DEPTH_NORM):
        max_depth = max(int(v) for v in cfg.grid)
        if exp == Experiment.DEPTH_RESIDUAL:
            toggles = [
                ("residual_on", {"residual": cfg.base.residual
                                 if cfg.base.residual != ResidualMode.NONE
                                 else ResidualMode.PLAIN}),
                ("residual_off", {"residual": ResidualMode.NONE}),
            ]
        else:
            toggles = [
                ("norm_on", {"normalize": True}),
                ("norm_off", {"normalize": False}),
            ]
        for family in cfg.families:
            for toggle_value, overrides in toggles:
                for seed in cfg.seeds:
                    spec = _spec_for(
                        cfg, family, depth=max_depth, **overrides
                    )
                    tasks.append(
                        _depth_task(cfg, family, toggle_value, spec, seed)
                    )
    elif exp in (
        Experiment.GAIN,
        Experiment.EPSILON,
        Experiment.HIDDEN,
        Experiment.INPUT,
    ):
        for family in cfg.families:
            for value in cfg.grid:
                for seed in cfg.seeds:
                    if exp == Experiment.GAIN:
                        spec = _spec_for(
                            cfg,
                            family,
                            init=replace(cfg.base.init, gain=float(value)),
                        )
                        name = "gain"
                    elif exp == Experiment.EPSILON:
                        spec = _spec_for(cfg, family, scsa_eps=float(value))
                        name = "epsilon"
                    elif exp == Experiment.HIDDEN:
                        spec = _spec_for(cfg, family, width=int(value))
                        name = "hidden"
                    else:
                        spec = _spec_for(cfg, family, input_side=int(value))
                        name = "input_side"
                    tasks.append(
                        _single_cell_task(cfg, family, name, value, spec, seed)
                    )
    elif exp == Experiment.LAYERWISE:
        depth = int(cfg.grid[0])
        for family in cfg.families:
            for seed in cfg.seeds:
                spec = _spec_for(cfg, family, depth=depth)
                tasks.append(_layerwise_task(cfg, family, spec, seed))
    elif exp == Experiment.NORMS:
        depth = int(cfg.grid[0])
        for family in cfg.families:
            for seed in cfg.seeds:
                spec = _spec_for(cfg, family, depth=depth)
                tasks.append(
                    _single_cell_task(
                        cfg, family, "depth", depth, spec, seed
                    )
                )
    else:
        raise ValueError(f"unhandled experiment: {exp}")

    rows = _run_tasks(tasks)
    return SweepTable(
        experiment=exp.value,
        rows=rows,
        duration_seconds=time.perf_counter() - start,
    )


def run_init_spectrum(
    methods: Sequence[InitMethod],
    n: int,
    seeds: Sequence[int],
    gain: float = 1.0,
) -> InitSpectrumTable:
    """Singular-value summaries of square initializer draws."""
    start = time.perf_counter()
    rows = []
    for method in methods:
        spec = InitSpec(method=method, gain=gain)
        for seed in seeds:
            w = init_matrix(spec, n, n, seed)
            values = full_singular_values(w)
            report = spectrum_report(w)
            rows.append(
                InitSpectrumRow(
                    method=method.value,
                    gain=gain,
                    n_out=n,
                    n_in=n,
                    seed=seed,
                    sigma_max=float(values[0]),
                    sigma_min=float(values[-1]),
                    frac_below_tenth=report.fraction_below(0.1),
                )
            )
    return InitSpectrumTable(
        rows=rows, duration_seconds=time.perf_counter() - start
    )


def emit_csv(table: SweepTable, path) -> Path:
    """Write a sweep table: fixed header, UTF-8, LF endings, "inf" literals."""
    if not table.rows:
        raise ValueError("refusing to emit an empty sweep table")
    path = Path(path)
    lines = [",".join(SWEEP_CSV_HEADER)]
    lines.extend(",".join(row.to_csv_fields()) for row in table.rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def emit_init_csv(table: InitSpectrumTable, path) -> Path:
    """Write an initializer-spectrum table alongside the sweep CSVs."""
    if not table.rows:
        raise ValueError("refusing to emit an empty spectrum table")
    path = Path(path)
    lines = [",".join(INIT_CSV_HEADER)]
    lines.extend(",".join(row.to_csv_fields()) for row in table.rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def _parse_grid_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_csv(path) -> SweepTable:
    """Read back an emitted sweep CSV; inverse of emit_csv."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.split("\n") if line]
    header = tuple(lines[0].split(","))
    if header != SWEEP_CSV_HEADER:
        raise ValueError(f"unexpected sweep CSV header: {header}")
    rows = []
    for line in lines[1:]:
        fields = line.split(",")
        rows.append(
            SweepRow(
                family=fields[0],
                toggle=fields[1],
                grid_name=fields[2],
                grid_value=_parse_grid_value(fields[3]),
                seed=int(fields[4]),
                norm=fields[5],
                k_s=float(fields[6]),
                k_u=float(fields[7]),
                overflow=fields[8] == "1",
            )
        )
    return SweepTable(experiment="parsed", rows=rows)


def merge_tables(name: str, tables: Sequence[SweepTable]) -> SweepTable:
    rows = [row for t in tables for row in t.rows]
    return SweepTable(
        experiment=name,
        rows=rows,
        duration_seconds=sum(t.duration_seconds for t in tables),
    )


def _desk_base(gain: float = 2.0) -> NetworkSpec:
    # bn_mode "train" so the conv family normalizes with the statistics of
    # the probe input itself; with frozen identity statistics the conv
    # stacks blow up by a factor per block and bury every cross-family
    # comparison the depth sweeps are after.
    return NetworkSpec(
        family=Family.TRANSFORMER_DPA,
        depth=4,
        width=256,
        heads=8,
        input_side=16,
        bn_mode="train",
        init=InitSpec(method=InitMethod.XAVIER_NORMAL, gain=gain),
    )


def _paper_base(gain: float = 2.0) -> NetworkSpec:
    return NetworkSpec(
        family=Family.TRANSFORMER_DPA,
        depth=4,
        width=1024,
        heads=8,
        input_side=32,
        bn_mode="train",
        init=InitSpec(method=InitMethod.XAVIER_NORMAL, gain=gain),
    )


def _figure_configs(
    base: NetworkSpec,
    settings: EstimatorSettings,
    seeds: tuple[int, ...],
    depth_grid: tuple[int, ...],
    fig6_depth: int,
    hidden_grid: tuple[int, ...],
    input_grid: tuple[int, ...],
    profile_depth: int,
) -> dict[str, SweepConfig]:
    all_families = (
        Family.TRANSFORMER_DPA,
        Family.TRANSFORMER_SCSA,
        Family.RESNET_CONV,
    )
    fig6_base = replace(base, depth=fig6_depth)
    return {
        "fig4": SweepConfig(
            experiment=Experiment.DEPTH_RESIDUAL,
            families=all_families,
            grid=depth_grid,
            base=base,
            settings=settings,
            seeds=seeds,
        ),
        "fig5": SweepConfig(
            experiment=Experiment.DEPTH_NORM,
            families=(Family.TRANSFORMER_DPA,),
            grid=depth_grid,
            base=base,
            settings=settings,
            seeds=seeds,
        ),
        "fig6_gain": SweepConfig(
            experiment=Experiment.GAIN,
            families=(Family.TRANSFORMER_DPA,),
            grid=(0.5, 1.0, 2.0, 4.0),
            base=fig6_base,
            settings=settings,
            seeds=seeds,
        ),
        "fig6_epsilon": SweepConfig(
            experiment=Experiment.EPSILON,
            families=(Family.TRANSFORMER_SCSA,),
            grid=(0.25, 1.0, 16.0, 256.0),
            base=fig6_base,
            settings=settings,
            seeds=seeds,
        ),
        "fig6_hidden": SweepConfig(
            experiment=Experiment.HIDDEN,
            families=all_families,
            grid=hidden_grid,
            base=fig6_base,
            settings=settings,
            seeds=seeds,
        ),
        "fig6_input": SweepConfig(
            experiment=Experiment.INPUT,
            families=(Family.TRANSFORMER_DPA,),
            grid=input_grid,
            base=fig6_base,
            settings=settings,
            seeds=seeds,
        ),
        "fig7_fig8": SweepConfig(
            experiment=Experiment.LAYERWISE,
            families=(Family.TRANSFORMER_DPA,),
            grid=(profile_depth,),
            base=base,
            settings=settings,
            seeds=seeds,
        ),
        "fig9": SweepConfig(
            experiment=Experiment.NORMS,
            families=all_families,
            grid=(profile_depth,),
            base=base,
            settings=settings,
            seeds=seeds,
            norms=(NormKind.L1, NormKind.L2, NormKind.LINF),
        ),
    }


def desk_configs() -> dict[str, SweepConfig]:
    """Laptop-scale preset: D=256, 16x16 inputs, depths to 16, 5x5 samples."""
    return _figure_configs(
        base=_desk_base(),
        settings=EstimatorSettings(base_points=5, perturbations=5),
        seeds=(0, 1, 2),
        depth_grid=(1, 2, 4, 8, 12, 16),
        fig6_depth=4,
        hidden_grid=(64, 128, 256, 512),
        input_grid=(8, 16, 32),
        profile_depth=12,
    )


def paper_configs() -> dict[str, SweepConfig]:
    """Full-scale preset: D=1024, 32x32 inputs, depths to 64, 10x10 samples."""
    return _figure_configs(
        base=_paper_base(),
        settings=EstimatorSettings(base_points=10, perturbations=10),
        seeds=(0, 1, 2),
        depth_grid=(1, 2, 4, 8, 12, 16, 24, 32, 48, 64),
        fig6_depth=12,
        hidden_grid=(256, 512, 1024, 2048),
        input_grid=(8, 16, 32),
        profile_depth=12,
    )


def _init_spectrum_params(scale: str) -> dict:
    methods = [
        InitMethod.XAVIER_UNIFORM,
        InitMethod.XAVIER_NORMAL,
        InitMethod.ORTHOGONAL,
        InitMethod.SPECTRAL,
    ]
    if scale == "desk":
        return {"methods": methods, "n": 256, "seeds": tuple(range(10))}
    return {"methods": methods, "n": 1024, "seeds": tuple(range(20))}


def run_all_paper_figures(scale: str, out_dir) -> dict[str, Path]:
    """Run every figure sweep at the given scale and emit one CSV per figure.

    Also writes a manifest echoing the configuration, the seeds, and the
    tool version.  Timing is printed by the caller, not stored, so repeat
    runs produce byte-identical files.
    """
    if scale not in ("desk", "paper"):
        raise ValueError(f"unknown scale {scale!r}; expected desk or paper")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = desk_configs() if scale == "desk" else paper_configs()

    paths: dict[str, Path] = {}
    spectrum = run_init_spectrum(**_init_spectrum_params(scale))
    paths["fig3"] = emit_init_csv(spectrum, out_dir / "fig3.csv")

    paths["fig4"] = emit_csv(run_sweep(configs["fig4"]), out_dir / "fig4.csv")
    paths["fig5"] = emit_csv(run_sweep(configs["fig5"]), out_dir / "fig5.csv")

    fig6 = merge_tables(
        "fig6",
        [
            run_sweep(configs["fig6_gain"]),
            run_sweep(configs["fig6_epsilon"]),
            run_sweep(configs["fig6_hidden"]),
            run_sweep(configs["fig6_input"]),
        ],
    )
    paths["fig6"] = emit_csv(fig6, out_dir / "fig6.csv")

    profile = run_sweep(configs["fig7_fig8"])
    fig7 = SweepTable(
        "fig7", [r for r in profile.rows if r.toggle == "from_input"]
    )
    fig8 = SweepTable(
        "fig8", [r for r in profile.rows if r.toggle == "to_output"]
    )
    paths["fig7"] = emit_csv(fig7, out_dir / "fig7.csv")
    paths["fig8"] = emit_csv(fig8, out_dir / "fig8.csv")

    paths["fig9"] = emit_csv(run_sweep(configs["fig9"]), out_dir / "fig9.csv")

    manifest = {
        "scale": scale,
        "seeds": list(configs["fig4"].seeds),
        "tool_version": _tool_version,
        "experiments": {
            name: {
                "experiment": cfg.experiment.value,
                "families": [f.value for f in cfg.families],
                "grid": list(cfg.grid),
                "seeds": list(cfg.seeds),
                "norms": [n.value for n in cfg.norms],
                "base_points": cfg.settings.base_points,
                "perturbations": cfg.settings.perturbations,
                "epsilon": cfg.settings.epsilon,
                "width": cfg.base.width,
                "input_side": cfg.base.input_side,
                "gain": cfg.base.init.gain,
            }
            for name, cfg in configs.items()
        },
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    paths["manifest"] = manifest_path
    return paths
