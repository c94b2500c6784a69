"""Plain-text configuration files binding networks to tool settings.

The format is deliberately small: ``[section]`` headers over ``key=value``
entries, with ``#`` or ``;`` starting a comment.  Several assignments may
share one line, so a complete network fits in a single line such as
``family=transformer_dpa depth=12 width=1024 heads=8``.  Keys appearing
before any header belong to ``[network]``.  Parsing is strict by default:
an unknown key or section is an error that names the nearest valid
spelling, and ``lenient=True`` downgrades those to collected warnings.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass

from .estimation import EstimatorSettings
from .initializers import InitMethod, InitSpec
from .linalg import NormKind
from .networks import Family, NetworkSpec, ResidualMode


class ConfigError(ValueError):
    """Raised for unreadable, ill-typed, or contradictory configuration.

    ``line`` carries the 1-based source line when the problem is tied to
    one; cross-key conflicts have no single line and leave it None.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class ConfigKey:
    """One accepted key: where it lives, how it parses, what it means."""

    section: str
    name: str
    kind: str  # int | float | optfloat | bool | str
    default: object
    help: str
    choices: tuple[str, ...] | None = None
    positive: bool = False


CONFIG_SCHEMA: tuple[ConfigKey, ...] = (
    ConfigKey(
        "network", "preset", "str", "none",
        "scale preset applied before explicit keys",
        choices=("none", "desk-default", "paper-default"),
    ),
    ConfigKey(
        "network", "family", "str", "transformer_dpa",
        "experiment family",
        choices=tuple(f.value for f in Family),
    ),
    ConfigKey("network", "depth", "int", 12, "number of blocks L",
              positive=True),
    ConfigKey("network", "width", "int", 256,
              "model dimension (channels for the conv family)",
              positive=True),
    ConfigKey("network", "heads", "int", 8, "attention heads",
              positive=True),
    ConfigKey("network", "ffn_expand", "int", 4,
              "feed-forward expansion factor", positive=True),
    ConfigKey("network", "use_residual", "bool", True,
              "keep the shortcut around every branch"),
    ConfigKey("network", "wrs_nu_init", "optfloat", None,
              "weighted-residual shortcut scale, or none for plain"),
    ConfigKey("network", "droppath_p", "float", 0.0,
              "probability of dropping a residual branch"),
    ConfigKey("network", "use_norm", "bool", True,
              "keep the normalization layers"),
    ConfigKey(
        "network", "norm_kind", "str", "auto",
        "normalization variant (auto picks ln/bn by family)",
        choices=("auto", "ln", "bn", "rmsnorm", "centernorm"),
    ),
    ConfigKey("network", "norm_eps", "float", 1e-5,
              "smoothing constant inside normalization", positive=True),
    ConfigKey("network", "input_side", "int", 32,
              "input grid is input_side x input_side", positive=True),
    ConfigKey("network", "kernel", "int", 3, "conv kernel size",
              positive=True),
    ConfigKey("network", "stride", "int", 1, "conv stride", positive=True),
    ConfigKey("network", "bn_mode", "str", "inference",
              "batch-norm statistics source",
              choices=("inference", "train")),
    ConfigKey("network", "scsa_nu", "float", 1.0,
              "scale-cosine attention output scale"),
    ConfigKey("network", "scsa_tau", "float", 5.0,
              "scale-cosine attention temperature", positive=True),
    ConfigKey("network", "scsa_eps", "float", 1e-5,
              "scale-cosine attention smoothing", positive=True),
    ConfigKey(
        "network", "init_method", "str", "xavier_normal",
        "weight initialization recipe",
        choices=tuple(m.value for m in InitMethod),
    ),
    ConfigKey("network", "init_gain", "float", 2.0,
              "multiplier on every initialized matrix"),
    ConfigKey("network", "init_negative_slope", "float", 0.0,
              "negative slope for the kaiming recipe"),
    ConfigKey("network", "init_depth_rule", "str", "sqrt",
              "depth-aware shrink rule", choices=("sqrt", "linear")),
    ConfigKey("estimator", "base_points", "int", 10,
              "sampled base points", positive=True),
    ConfigKey("estimator", "perturbations", "int", 10,
              "perturbations per base point", positive=True),
    ConfigKey("estimator", "epsilon", "float", 1e-7,
              "perturbation radius", positive=True),
    ConfigKey("estimator", "norm", "str", "l2", "norm for slope ratios",
              choices=tuple(k.value for k in NormKind)),
    ConfigKey("optimizer", "optimizer", "str", "adamw", "update rule",
              choices=("adamw", "sgd")),
    ConfigKey("optimizer", "lr", "float", 1e-3, "learning rate",
              positive=True),
    ConfigKey("optimizer", "weight_decay", "float", 0.0,
              "decoupled weight-decay coefficient"),
    ConfigKey("optimizer", "beta1", "float", 0.9,
              "first-moment decay (adamw)"),
    ConfigKey("optimizer", "beta2", "float", 0.999,
              "second-moment decay (adamw)"),
    ConfigKey("optimizer", "momentum", "float", 0.9,
              "velocity decay (sgd)"),
    ConfigKey("optimizer", "eps_opt", "float", 1e-8,
              "denominator smoothing (adamw)", positive=True),
    ConfigKey("optimizer", "bias_correction", "str", "fixed",
              "adamw bias-correction flavor",
              choices=("fixed", "stepwise")),
    ConfigKey("optimizer", "steps", "int", 10, "training steps",
              positive=True),
    ConfigKey("optimizer", "batch_size", "int", 4, "toy batch size",
              positive=True),
    ConfigKey("optimizer", "head_dim", "int", 2,
              "output dimension of the toy head", positive=True),
    ConfigKey("optimizer", "zero_gradients", "bool", False,
              "feed zero gradients (isolates decay and momentum)"),
)

SECTIONS = ("network", "estimator", "optimizer")

_BY_FULL_NAME = {(k.section, k.name): k for k in CONFIG_SCHEMA}

# Applied before explicit keys, so a preset line can be refined in place.
_PRESETS = {
    "none": {},
    "desk-default": {"width": "256", "input_side": "16"},
    "paper-default": {
        "depth": "12", "width": "1024", "heads": "8", "input_side": "32",
    },
}

_TRUE_WORDS = ("true", "yes", "on", "1")
_FALSE_WORDS = ("false", "no", "off", "0")


@dataclass(frozen=True)
class OptimSettings:
    """Optimizer-simulation settings as bound by the [optimizer] section."""

    optimizer: str = "adamw"
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    momentum: float = 0.9
    eps_opt: float = 1e-8
    bias_correction: str = "fixed"
    steps: int = 10
    batch_size: int = 4
    head_dim: int = 2
    zero_gradients: bool = False


@dataclass(frozen=True)
class LoadedConfig:
    """Everything a run needs, with any lenient-mode warnings attached."""

    network: NetworkSpec
    estimator: EstimatorSettings
    optimizer: OptimSettings
    warnings: tuple[str, ...] = ()


def _suggest(word: str, valid: list[str]) -> str:
    close = difflib.get_close_matches(word, valid, n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def _parse_value(key: ConfigKey, text: str, line: int | None):
    label = f"{key.section}.{key.name}"
    lowered = text.strip().lower()
    if key.kind == "bool":
        if lowered in _TRUE_WORDS:
            return True
        if lowered in _FALSE_WORDS:
            return False
        raise ConfigError(f"{label} expects true/false, got {text!r}", line)
    if key.kind == "optfloat" and lowered == "none":
        return None
    if key.kind in ("int", "float", "optfloat"):
        try:
            value = int(text) if key.kind == "int" else float(text)
        except ValueError:
            wanted = "an integer" if key.kind == "int" else "a number"
            raise ConfigError(
                f"{label} expects {wanted}, got {text!r}", line
            ) from None
        if key.positive and not value > 0:
            raise ConfigError(f"{label} must be positive, got {text}", line)
        return value
    if key.choices is not None and lowered not in key.choices:
        raise ConfigError(
            f"{label} must be one of {', '.join(key.choices)}; got {text!r}"
            + _suggest(lowered, list(key.choices)),
            line,
        )
    return lowered if key.choices is not None else text.strip()


def _split_assignments(body: str, line: int) -> list[tuple[str, str]]:
    tokens = body.split()
    if tokens and all("=" in tok for tok in tokens):
        pairs = [tok.split("=", 1) for tok in tokens]
    elif body.count("=") == 1:
        pairs = [body.split("=", 1)]
    else:
        raise ConfigError(
            "expected key=value entries separated by whitespace", line
        )
    for name, _ in pairs:
        if not name.strip():
            raise ConfigError("missing key before '='", line)
    return [(name.strip().lower(), value.strip()) for name, value in pairs]


def parse_config_text(
    text: str, lenient: bool = False
) -> tuple[dict[tuple[str, str], object], list[str]]:
    """Parse raw text into {(section, key): value} plus lenient warnings."""
    values: dict[tuple[str, str], object] = {}
    warnings: list[str] = []
    section = "network"

    def complain(message: str, line: int) -> None:
        if lenient:
            warnings.append(f"line {line}: {message}")
        else:
            raise ConfigError(message, line)

    def assign(name: str, raw: str, line: int | None) -> None:
        key = _BY_FULL_NAME.get((section, name))
        if key is None:
            known = [k.name for k in CONFIG_SCHEMA if k.section == section]
            complain(
                f"unknown key {name!r} in [{section}]"
                + _suggest(name, known),
                line,
            )
            return
        if name == "preset":
            preset = _parse_value(key, raw, line)
            for preset_name, preset_raw in _PRESETS[preset].items():
                assign(preset_name, preset_raw, line)
            return
        values[(section, name)] = _parse_value(key, raw, line)

    for lineno, rawline in enumerate(text.splitlines(), start=1):
        body = rawline.split("#", 1)[0].split(";", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError("unterminated [section] header", lineno)
            name = body[1:-1].strip().lower()
            if name not in SECTIONS:
                complain(
                    f"unknown section [{name}]"
                    + _suggest(name, list(SECTIONS)),
                    lineno,
                )
                section = name  # swallow its keys in lenient mode
                continue
            section = name
            continue
        if section not in SECTIONS:
            continue  # lenient mode, inside an unknown section
        for name, raw in _split_assignments(body, lineno):
            assign(name, raw, lineno)

    return values, warnings


def _get(values: dict, section: str, name: str):
    key = _BY_FULL_NAME[(section, name)]
    return values.get((section, name), key.default)


def _residual_mode(values: dict) -> ResidualMode:
    use_residual = _get(values, "network", "use_residual")
    droppath_p = _get(values, "network", "droppath_p")
    wrs_nu = _get(values, "network", "wrs_nu_init")
    if not use_residual:
        if droppath_p > 0 or wrs_nu is not None:
            raise ConfigError(
                "use_residual=false contradicts droppath_p/wrs_nu_init; "
                "there is no branch left to scale or drop"
            )
        return ResidualMode.NONE
    if droppath_p > 0 and wrs_nu is not None:
        raise ConfigError(
            "droppath_p and wrs_nu_init select different shortcut "
            "variants; set only one"
        )
    if droppath_p > 0:
        return ResidualMode.DROPPATH
    if wrs_nu is not None:
        return ResidualMode.WEIGHTED
    return ResidualMode.PLAIN


def _network_from(values: dict) -> NetworkSpec:
    depth = _get(values, "network", "depth")
    method = InitMethod.from_string(_get(values, "network", "init_method"))
    init = InitSpec(
        method=method,
        gain=_get(values, "network", "init_gain"),
        negative_slope=_get(values, "network", "init_negative_slope"),
        depth=depth if method == InitMethod.DEPTH_AWARE else 1,
        depth_rule=_get(values, "network", "init_depth_rule"),
    )
    try:
        return NetworkSpec(
            family=Family.from_string(_get(values, "network", "family")),
            depth=depth,
            width=_get(values, "network", "width"),
            heads=_get(values, "network", "heads"),
            ffn_expand=_get(values, "network", "ffn_expand"),
            residual=_residual_mode(values),
            normalize=_get(values, "network", "use_norm"),
            norm_kind=_get(values, "network", "norm_kind"),
            norm_eps=_get(values, "network", "norm_eps"),
            input_side=_get(values, "network", "input_side"),
            kernel=_get(values, "network", "kernel"),
            stride=_get(values, "network", "stride"),
            bn_mode=_get(values, "network", "bn_mode"),
            droppath_p=_get(values, "network", "droppath_p"),
            wrs_nu=_get(values, "network", "wrs_nu_init"),
            scsa_nu=_get(values, "network", "scsa_nu"),
            scsa_tau=_get(values, "network", "scsa_tau"),
            scsa_eps=_get(values, "network", "scsa_eps"),
            init=init,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _estimator_from(values: dict) -> EstimatorSettings:
    return EstimatorSettings(
        base_points=_get(values, "estimator", "base_points"),
        perturbations=_get(values, "estimator", "perturbations"),
        epsilon=_get(values, "estimator", "epsilon"),
        norm=NormKind.from_string(_get(values, "estimator", "norm")),
    )


def _optimizer_from(values: dict) -> OptimSettings:
    return OptimSettings(
        optimizer=_get(values, "optimizer", "optimizer"),
        lr=_get(values, "optimizer", "lr"),
        weight_decay=_get(values, "optimizer", "weight_decay"),
        beta1=_get(values, "optimizer", "beta1"),
        beta2=_get(values, "optimizer", "beta2"),
        momentum=_get(values, "optimizer", "momentum"),
        eps_opt=_get(values, "optimizer", "eps_opt"),
        bias_correction=_get(values, "optimizer", "bias_correction"),
        steps=_get(values, "optimizer", "steps"),
        batch_size=_get(values, "optimizer", "batch_size"),
        head_dim=_get(values, "optimizer", "head_dim"),
        zero_gradients=_get(values, "optimizer", "zero_gradients"),
    )


def apply_overrides(
    values: dict[tuple[str, str], object], overrides: list[str]
) -> None:
    """Apply ``section.key=value`` strings, as given on the command line."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not section.key=value")
        path, raw = item.split("=", 1)
        if "." in path:
            section, name = path.split(".", 1)
        else:
            section, name = "network", path
        section, name = section.strip().lower(), name.strip().lower()
        key = _BY_FULL_NAME.get((section, name))
        if key is None:
            known = [f"{k.section}.{k.name}" for k in CONFIG_SCHEMA]
            raise ConfigError(
                f"unknown override key {path.strip()!r}"
                + _suggest(f"{section}.{name}", known)
            )
        if name == "preset":
            for preset_name, preset_raw in _PRESETS[
                _parse_value(key, raw, None)
            ].items():
                values[("network", preset_name)] = _parse_value(
                    _BY_FULL_NAME[("network", preset_name)],
                    preset_raw,
                    None,
                )
            continue
        values[(section, name)] = _parse_value(key, raw, None)


def bind_config(
    values: dict[tuple[str, str], object], warnings: list[str]
) -> LoadedConfig:
    """Turn parsed values into typed settings objects."""
    return LoadedConfig(
        network=_network_from(values),
        estimator=_estimator_from(values),
        optimizer=_optimizer_from(values),
        warnings=tuple(warnings),
    )


def loads_config(
    text: str, lenient: bool = False, overrides: list[str] | None = None
) -> LoadedConfig:
    """Parse configuration text; ``overrides`` win over file entries."""
    values, warnings = parse_config_text(text, lenient=lenient)
    if overrides:
        apply_overrides(values, overrides)
    return bind_config(values, warnings)


def load_config(
    path: str, lenient: bool = False, overrides: list[str] | None = None
) -> LoadedConfig:
    """Read and bind a configuration file."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    return loads_config(text, lenient=lenient, overrides=overrides)


def _format_value(key: ConfigKey, value) -> str:
    if key.kind == "bool":
        return "true" if value else "false"
    if value is None:
        return "none"
    if key.kind in ("float", "optfloat"):
        return repr(float(value))
    return str(value)


def network_spec_to_values(spec: NetworkSpec) -> dict[tuple[str, str], object]:
    """Express a NetworkSpec in configuration keys.

    A zero-init weighted shortcut and the weighted mode share one key, so
    the zero-init variant comes back as weighted with scale 0.0; a
    droppath probability is meaningful only in droppath mode and is
    dropped otherwise; every other field round-trips exactly.
    """
    wrs_nu = None
    if spec.residual == ResidualMode.WEIGHTED:
        wrs_nu = 1.0 / spec.depth if spec.wrs_nu is None else spec.wrs_nu
    elif spec.residual == ResidualMode.REZERO:
        wrs_nu = 0.0
    droppath_p = (
        spec.droppath_p if spec.residual == ResidualMode.DROPPATH else 0.0
    )
    return {
        ("network", "family"): spec.family.value,
        ("network", "depth"): spec.depth,
        ("network", "width"): spec.width,
        ("network", "heads"): spec.heads,
        ("network", "ffn_expand"): spec.ffn_expand,
        ("network", "use_residual"): spec.residual != ResidualMode.NONE,
        ("network", "wrs_nu_init"): wrs_nu,
        ("network", "droppath_p"): droppath_p,
        ("network", "use_norm"): spec.normalize,
        ("network", "norm_kind"): spec.norm_kind,
        ("network", "norm_eps"): spec.norm_eps,
        ("network", "input_side"): spec.input_side,
        ("network", "kernel"): spec.kernel,
        ("network", "stride"): spec.stride,
        ("network", "bn_mode"): spec.bn_mode,
        ("network", "scsa_nu"): spec.scsa_nu,
        ("network", "scsa_tau"): spec.scsa_tau,
        ("network", "scsa_eps"): spec.scsa_eps,
        ("network", "init_method"): spec.init.method.value,
        ("network", "init_gain"): spec.init.gain,
        ("network", "init_negative_slope"): spec.init.negative_slope,
        ("network", "init_depth_rule"): spec.init.depth_rule,
    }


def serialize_config(cfg: LoadedConfig) -> str:
    """Render the canonical form: every key explicit, schema order.

    loads_config(serialize_config(c)) reproduces c, and serializing again
    reproduces the same text, which makes the canonical form a fixed
    point.
    """
    values = network_spec_to_values(cfg.network)
    values.update(
        {
            ("estimator", "base_points"): cfg.estimator.base_points,
            ("estimator", "perturbations"): cfg.estimator.perturbations,
            ("estimator", "epsilon"): cfg.estimator.epsilon,
            ("estimator", "norm"): cfg.estimator.norm.value,
        }
    )
    for key in CONFIG_SCHEMA:
        if key.section == "optimizer":
            values[(key.section, key.name)] = getattr(
                cfg.optimizer, key.name
            )
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for key in CONFIG_SCHEMA:
            if key.section != section or key.name == "preset":
                continue
            lines.append(
                f"{key.name}={_format_value(key, values[(section, key.name)])}"
            )
        lines.append("")
    return "\n".join(lines)


def config_help_text() -> str:
    """One line per accepted key: name, type, default, meaning."""
    lines = ["configuration keys (key=value under [section] headers):"]
    for section in SECTIONS:
        lines.append(f"  [{section}]")
        for key in CONFIG_SCHEMA:
            if key.section != section:
                continue
            default = _format_value(key, key.default)
            detail = key.help
            if key.choices is not None:
                detail += f" ({'|'.join(key.choices)})"
            lines.append(
                f"    {key.name}={default}  {detail}"
            )
    return "\n".join(lines)
