"""Command-line front end: estimate, bound, and sweep from config files.

Exit codes are part of the interface: 0 on success, 1 when the request
itself is invalid (bad flag, bad config, violated precondition), 2 when a
valid request fails at runtime (overflow, non-convergence, I/O).  With
``--json-errors`` the failure is also serialized as one JSON object on
stderr.  On success stderr stays empty; everything informational goes to
stdout.
"""

from __future__ import annotations

import argparse
import difflib
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, LoadedConfig, config_help_text, load_config
from .estimation import (
    _base_rng,
    check_principles,
    compose_network_bound,
    estimate_K,
    network_function,
)
from .harness import (
    Experiment,
    SweepConfig,
    _parse_grid_value,
    emit_csv,
    emit_init_csv,
    run_all_paper_figures,
    run_init_spectrum,
    run_sweep,
)
from .initializers import InitMethod, InitSpec, init_matrix, spectrum_report
from .linalg import NormKind, format_quantity, vector_norm
from .networks import Family, build, net_jacobian_product
from .optim import run_toy_training

SUBCOMMANDS = (
    "estimate",
    "bound",
    "jacobian-check",
    "sweep",
    "figures",
    "init-stats",
    "optim-sim",
    "principles",
)


class UsageError(ValueError):
    """The command line itself is malformed."""


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of printing and exiting on errors."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument(
        "--seed", type=int, default=0, help="master seed (default 0)"
    )
    common.add_argument(
        "--json-errors",
        action="store_true",
        help="report failures as one JSON object on stderr",
    )

    configful = _Parser(add_help=False, parents=[common])
    configful.add_argument(
        "--config", required=True, help="configuration file path"
    )
    configful.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config entry (repeatable)",
    )
    configful.add_argument(
        "--lenient",
        action="store_true",
        help="warn on unknown config keys instead of failing",
    )
    configful.add_argument("--out", help="output file path")

    parser = _Parser(
        prog="lipscope",
        description=__doc__.splitlines()[0],
        epilog=config_help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser(
        "estimate",
        parents=[configful],
        help="sampled slope K_s of the configured network",
    )
    sub.add_parser(
        "bound",
        parents=[configful],
        help="analytic upper view K_u with caveat flags",
    )

    jac = sub.add_parser(
        "jacobian-check",
        parents=[configful],
        help="chained Jacobian vs finite differences (small nets only)",
    )
    jac.add_argument("--points", type=int, default=5,
                     help="base points to test (default 5)")
    jac.add_argument("--probes", type=int, default=20,
                     help="directions per base point (default 20)")
    jac.add_argument("--tol", type=float, default=1e-4,
                     help="max relative error tolerated (default 1e-4)")
    jac.add_argument("--fd-step", type=float, default=1e-6,
                     help="central-difference step (default 1e-6)")

    sweep = sub.add_parser(
        "sweep",
        parents=[configful],
        help="one experiment grid to CSV",
    )
    sweep.add_argument(
        "--experiment",
        required=True,
        choices=[e.value for e in Experiment],
        help="which toggle/grid to sweep",
    )
    sweep.add_argument("--grid", required=True,
                       help="comma-separated grid values")
    sweep.add_argument(
        "--families",
        help="comma-separated families (default: the configured one)",
    )
    sweep.add_argument("--seeds",
                       help="comma-separated seeds (default: --seed)")
    sweep.add_argument(
        "--norms",
        help="comma-separated norms (default: the configured one)",
    )

    figures = sub.add_parser(
        "figures",
        parents=[common],
        help="reproduce every landscape figure at desk or full scale",
    )
    figures.add_argument("--scale", choices=("desk", "paper"),
                         default="desk", help="preset size (default desk)")
    figures.add_argument("--out-dir", required=True,
                         help="directory for the CSVs and manifest")

    init_stats = sub.add_parser(
        "init-stats",
        parents=[common],
        help="singular-value statistics of initializer draws",
    )
    init_stats.add_argument(
        "--method",
        default="xavier_normal",
        choices=[m.value for m in InitMethod],
        help="initializer recipe (default xavier_normal)",
    )
    init_stats.add_argument("--n", type=int, default=1024,
                            help="matrix side; 512 for a quick pass")
    init_stats.add_argument("--num-seeds", type=int, default=20,
                            help="seeds 0..N-1 (default 20)")
    init_stats.add_argument("--gain", type=float, default=1.0,
                            help="initializer gain (default 1.0)")
    init_stats.add_argument("--bins", type=int, default=64,
                            help="histogram bins (default 64)")
    init_stats.add_argument("--out", help="summary CSV path")
    init_stats.add_argument("--hist-out",
                            help="per-seed spectrum histogram CSV path")

    optim = sub.add_parser(
        "optim-sim",
        parents=[configful],
        help="toy training trace (finite-difference gradients: keep the "
             "network tiny)",
    )
    optim.add_argument("--steps", type=int,
                       help="override [optimizer] steps")

    principles = sub.add_parser(
        "principles",
        parents=[configful],
        help="forward/backward range scan against a float format",
    )
    principles.add_argument("--precision", choices=("fp16", "fp32"),
                            default="fp16", help="format to check against")

    return parser


def _flag_registry(parser: _Parser) -> dict[str, set[str]]:
    """Option strings per subcommand, plus the top level under ''."""
    registry: dict[str, set[str]] = {"": set()}
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for name, subparser in action.choices.items():
                registry[name] = {
                    flag
                    for sub_action in subparser._actions
                    for flag in sub_action.option_strings
                }
        else:
            registry[""].update(action.option_strings)
    return registry


def _looks_numeric(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _reject_unknown_flags(parser: _Parser, argv: list[str]) -> None:
    registry = _flag_registry(parser)
    known = set(registry[""])
    for token in argv:
        if not token.startswith("-"):
            if token in registry:
                known |= registry[token]
            break
    for token in argv:
        if token == "--":
            break
        if not token.startswith("-") or _looks_numeric(token):
            continue
        flag = token.split("=", 1)[0]
        if flag not in known:
            near = difflib.get_close_matches(
                flag, sorted(known), n=1, cutoff=0.0
            )
            hint = f"; nearest valid flag: {near[0]}" if near else ""
            raise UsageError(f"unknown flag {flag!r}{hint}")


def _load(args) -> LoadedConfig:
    try:
        return load_config(
            args.config, lenient=args.lenient, overrides=args.set
        )
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config!r}: {exc}") from exc


def _print_warnings(cfg: LoadedConfig) -> None:
    for message in cfg.warnings:
        print(f"warning: {message}")


def _write_json(path, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _cmd_estimate(args) -> int:
    cfg = _load(args)
    _print_warnings(cfg)
    net = build(cfg.network, args.seed)
    est = estimate_K(
        network_function(net),
        net.data_shape,
        base_points=cfg.estimator.base_points,
        perturbations=cfg.estimator.perturbations,
        epsilon=cfg.estimator.epsilon,
        norm=cfg.estimator.norm,
        seed=args.seed,
    )
    if args.out:
        _write_json(args.out, est.to_json_dict())
    print(
        f"K_s = {format_quantity(est.value)}  "
        f"({est.norm.value}, {est.num_base_points}x{est.num_perturbations} "
        f"samples, epsilon {est.epsilon:g}, seed {est.seed})"
    )
    if est.overflowed:
        base, pert = est.argmax_sample
        print(f"overflow at base point {base}, perturbation {pert}")
    return 0


def _cmd_bound(args) -> int:
    cfg = _load(args)
    _print_warnings(cfg)
    net = build(cfg.network, args.seed)
    report = compose_network_bound(net)
    if args.out:
        _write_json(args.out, report.to_json_dict())
    print(f"K_u = {format_quantity(report.total)}")
    if report.caveats:
        print("caveats: " + ", ".join(report.caveats))
    return 0


def _cmd_jacobian_check(args) -> int:
    cfg = _load(args)
    _print_warnings(cfg)
    if args.points < 1 or args.probes < 1:
        raise UsageError("--points and --probes must be at least 1")
    if not args.tol > 0 or not args.fd_step > 0:
        raise UsageError("--tol and --fd-step must be positive")
    net = build(cfg.network, args.seed)
    f = network_function(net)
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 3)))
    h = args.fd_step
    worst = 0.0
    for _ in range(args.points):
        x = rng.standard_normal(net.data_shape)
        jac = net_jacobian_product(net, x)
        for _ in range(args.probes):
            v = rng.standard_normal(net.data_shape)
            analytic = jac.T @ v.ravel()
            fd = (f(x + h * v) - f(x - h * v)).ravel() / (2.0 * h)
            err = vector_norm(analytic - fd, NormKind.L2)
            scale = max(vector_norm(fd, NormKind.L2), 1e-12)
            worst = max(worst, err / scale)
    if args.out:
        _write_json(
            args.out,
            {
                "max_relative_error": worst,
                "points": args.points,
                "probes": args.probes,
                "tolerance": args.tol,
                "fd_step": h,
            },
        )
    print(
        f"max relative error = {worst:.3e} over {args.points} points x "
        f"{args.probes} probes (tolerance {args.tol:g})"
    )
    if worst > args.tol:
        raise RuntimeError(
            f"chained Jacobian disagrees with finite differences: "
            f"{worst:.3e} > {args.tol:g}"
        )
    return 0


def _csv_tokens(text: str) -> list[str]:
    tokens = [tok.strip() for tok in text.split(",")]
    if any(not tok for tok in tokens):
        raise UsageError(f"empty entry in list {text!r}")
    return tokens


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    _print_warnings(cfg)
    if not args.out:
        raise UsageError("sweep requires --out")
    if args.families:
        families = tuple(
            Family.from_string(tok) for tok in _csv_tokens(args.families)
        )
    else:
        families = (cfg.network.family,)
    if args.seeds:
        try:
            seeds = tuple(int(tok) for tok in _csv_tokens(args.seeds))
        except ValueError:
            raise UsageError(
                f"--seeds expects integers, got {args.seeds!r}"
            ) from None
    else:
        seeds = (args.seed,)
    if args.norms:
        norms = tuple(
            NormKind.from_string(tok) for tok in _csv_tokens(args.norms)
        )
    else:
        norms = (cfg.estimator.norm,)
    sweep_cfg = SweepConfig(
        experiment=Experiment.from_string(args.experiment),
        families=families,
        grid=tuple(_parse_grid_value(tok) for tok in _csv_tokens(args.grid)),
        base=cfg.network,
        settings=cfg.estimator,
        seeds=seeds,
        norms=norms,
    )
    table = run_sweep(sweep_cfg)
    emit_csv(table, args.out)
    print(
        f"wrote {len(table.rows)} rows to {args.out} "
        f"({table.duration_seconds:.1f}s)"
    )
    return 0


def _cmd_figures(args) -> int:
    start = time.perf_counter()
    paths = run_all_paper_figures(args.scale, args.out_dir)
    elapsed = time.perf_counter() - start
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    print(f"wall time: {elapsed:.1f}s")
    return 0


def _cmd_init_stats(args) -> int:
    if args.n < 1 or args.num_seeds < 1 or args.bins < 1:
        raise UsageError("--n, --num-seeds, and --bins must be at least 1")
    method = InitMethod.from_string(args.method)
    seeds = tuple(range(args.num_seeds))
    table = run_init_spectrum([method], args.n, seeds, gain=args.gain)
    if args.out:
        emit_init_csv(table, args.out)
    if args.hist_out:
        lines = ["method,seed,bin_left,bin_right,count"]
        for seed in seeds:
            spec = InitSpec(method=method, gain=args.gain)
            w = init_matrix(spec, args.n, args.n, seed)
            report = spectrum_report(w, bins=args.bins)
            lines.extend(
                f"{method.value},{seed},{left!r},{right!r},{count}"
                for left, right, count in report.csv_rows()
            )
        Path(args.hist_out).write_text(
            "\n".join(lines) + "\n", encoding="utf-8", newline="\n"
        )
    sigma_max = max(row.sigma_max for row in table.rows)
    sigma_min = min(row.sigma_min for row in table.rows)
    frac = sum(row.frac_below_tenth for row in table.rows) / len(table.rows)
    print(
        f"{method.value} {args.n}x{args.n}, {args.num_seeds} seeds: "
        f"max sigma_max = {sigma_max:.6f}, min sigma_min = {sigma_min:.2e}, "
        f"mean fraction below 0.1 = {frac:.4f}"
    )
    return 0


def _cmd_optim_sim(args) -> int:
    cfg = _load(args)
    _print_warnings(cfg)
    net = build(cfg.network, args.seed)
    opt = cfg.optimizer
    steps = opt.steps if args.steps is None else args.steps
    if steps < 1:
        raise UsageError("--steps must be at least 1")
    trace = run_toy_training(
        net,
        steps,
        optimizer=opt.optimizer,
        lr=opt.lr,
        weight_decay=opt.weight_decay,
        beta1=opt.beta1,
        beta2=opt.beta2,
        momentum=opt.momentum,
        eps_opt=opt.eps_opt,
        bias_correction=opt.bias_correction,
        batch_size=opt.batch_size,
        head_dim=opt.head_dim,
        seed=args.seed,
        zero_gradients=opt.zero_gradients,
    )
    if args.out:
        trace.write_csv(args.out)
    losses = trace.losses()
    summary = f"{trace.steps_completed} of {steps} steps"
    if losses:
        summary += f", final loss = {losses[-1]:.6g}"
    if trace.halted:
        summary += f"; halted: {trace.halt_reason}"
    print(summary)
    return 0


def _cmd_principles(args) -> int:
    cfg = _load(args)
    _print_warnings(cfg)
    net = build(cfg.network, args.seed)
    x = _base_rng(args.seed).standard_normal(net.data_shape)
    report = check_principles(net, x, precision=args.precision)
    if args.out:
        _write_json(args.out, report.to_json_dict())
    stages = len(report.stage_labels)
    print(
        f"forward: {len(report.forward_violations)} violation(s) "
        f"over {stages} stages ({args.precision}, R = "
        f"{format_quantity(report.threshold)})"
    )
    if report.forward_violations:
        first = report.forward_violations[0]
        print(f"first at stage {first}: {report.stage_labels[first]}")
    if report.max_abs_gradient is None:
        print("backward: skipped (data size exceeds the Jacobian guard)")
    else:
        print(
            f"backward: {len(report.backward_violations)} violation(s) "
            f"over {len(report.max_abs_gradient)} tail products"
        )
    return 0


_HANDLERS = {
    "estimate": _cmd_estimate,
    "bound": _cmd_bound,
    "jacobian-check": _cmd_jacobian_check,
    "sweep": _cmd_sweep,
    "figures": _cmd_figures,
    "init-stats": _cmd_init_stats,
    "optim-sim": _cmd_optim_sim,
    "principles": _cmd_principles,
}


def _report_error(exc: BaseException, code: int, as_json: bool) -> int:
    if as_json:
        payload = {
            "error": "validation" if code == 1 else "runtime",
            "message": str(exc),
            "exit_code": code,
        }
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json-errors" in argv
    try:
        parser = _build_parser()
        _reject_unknown_flags(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help prints and exits cleanly
            return int(exc.code or 0)
        return _HANDLERS[args.subcommand](args)
    except (ConfigError, UsageError, ValueError) as exc:
        return _report_error(exc, 1, as_json)
    except Exception as exc:  # runtime failures and genuine surprises
        return _report_error(exc, 2, as_json)


if __name__ == "__main__":
    raise SystemExit(main())
