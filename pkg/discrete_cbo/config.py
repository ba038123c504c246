"""
Experiment configuration.

A config file is flat `key = value` text. `#` starts a comment, blank lines are
ignored, list values are comma separated and every key may appear once. Flags and
`--set KEY=VALUE` overrides are applied on top of the file, then the whole mapping
is validated field by field.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Union

from .dynamics import DEFAULT_CONSENSUS_TOL, DEFAULT_MAX_STEPS, RunConfig
from .errors import CBOError, ConfigError, suggest_names
from .laws import InitialLaw, LawKind
from .noise import NoiseKind, NoiseScheme, generic_scheme, make_scheme
from .objectives import BUILTIN_NAMES, Objective, builtin, polynomial
from .stability import stability_boundary_modelA

logger = logging.getLogger(__name__)

TASKS = ("run", "stability", "moments", "laplace", "certify", "sweep")
SWEEP_TASKS = ("run", "certify", "laplace")
CERTIFICATES = ("laplace", "support", "rectangle")
OBJECTIVE_NAMES = BUILTIN_NAMES + ("polynomial",)
LAW_NAMES = tuple(k.value for k in LawKind)
MODEL_NAMES = tuple(k.value for k in NoiseKind)

U64_MAX = 2 ** 64 - 1

Value = Union[str, int, float, bool, None, Tuple[Any, ...]]


def _as_int(text: Any) -> int:
    if isinstance(text, bool):
        raise ValueError("expected an integer")
    if isinstance(text, int):
        return text
    if isinstance(text, float):
        if not text.is_integer():
            raise ValueError("expected an integer")
        return int(text)
    return int(str(text).strip())


def _as_float(text: Any) -> float:
    if isinstance(text, bool):
        raise ValueError("expected a number")
    value = float(text) if isinstance(text, (int, float)) else float(str(text).strip())
    if not math.isfinite(value):
        raise ValueError("expected a finite number")
    return value


def _as_optional_float(text: Any) -> Optional[float]:
    if text is None or (isinstance(text, str) and text.strip().lower() in ("", "none")):
        return None
    return _as_float(text)


def _as_bool(text: Any) -> bool:
    if isinstance(text, bool):
        return text
    key = str(text).strip().lower()
    if key in ("true", "yes", "1", "on"):
        return True
    if key in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _as_str(text: Any) -> str:
    return str(text).strip()


def _list_of(item: Callable[[Any], Any]) -> Callable[[Any], Tuple[Any, ...]]:
    def parse(text: Any) -> Tuple[Any, ...]:
        if isinstance(text, (list, tuple)):
            parts = list(text)
        else:
            raw = str(text).strip()
            parts = [p.strip() for p in raw.split(",")] if raw else []
        return tuple(item(p) for p in parts)
    return parse


@dataclass(frozen=True)
class FieldSpec:
    """One accepted config key."""
    key: str
    attr: str
    parse: Callable[[Any], Any]
    default: Value
    help: str = ""


FIELDS: Tuple[FieldSpec, ...] = (
    FieldSpec("task", "task", _as_str, "run", "one of " + ", ".join(TASKS)),
    FieldSpec("objective", "objective", _as_str, "sphere_plus_one", "builtin name or 'polynomial'"),
    FieldSpec("dim", "dim", _as_int, 2, "problem dimension"),
    FieldSpec("coefficients", "coefficients", _list_of(_as_float), (), "ascending polynomial coefficients"),
    FieldSpec("law", "law", _as_str, "uniform_box", "initial law kind"),
    FieldSpec("law_lower", "law_lower", _list_of(_as_float), (-1.0,), "box lower corner"),
    FieldSpec("law_upper", "law_upper", _list_of(_as_float), (1.0,), "box upper corner"),
    FieldSpec("law_center", "law_center", _list_of(_as_float), (0.0,), "ball center"),
    FieldSpec("law_radius", "law_radius", _as_float, 1.0, "ball radius"),
    FieldSpec("model", "model", _as_str, "ModelC", "ModelA, ModelB, ModelC or GenericGaussian"),
    FieldSpec("lambda", "lam", _as_float, 1.0, "drift rate"),
    FieldSpec("sigma", "sigma", _as_float, 1.0, "diffusion"),
    FieldSpec("h", "h", _as_float, 0.1, "step size"),
    FieldSpec("gamma", "gamma", _as_optional_float, None, "effective drift (GenericGaussian)"),
    FieldSpec("zeta", "zeta", _as_optional_float, None, "noise level (GenericGaussian)"),
    FieldSpec("beta", "beta", _as_float, 50.0, "inverse temperature"),
    FieldSpec("N", "n_particles", _as_int, 50, "particles per ensemble"),
    FieldSpec("replicas", "replicas", _as_int, 100, "independent replicas"),
    FieldSpec("max_steps", "max_steps", _as_int, DEFAULT_MAX_STEPS, "step limit per run"),
    FieldSpec("consensus_tol", "consensus_tol", _as_float, DEFAULT_CONSENSUS_TOL, "diameter stopping tolerance"),
    FieldSpec("seed", "seed", _as_int, 0, "unsigned 64-bit key"),
    FieldSpec("out", "out", _as_str, "cbo-output", "artifact directory"),
    FieldSpec("record_noise", "record_noise", _as_bool, False, "store eta_n for replay"),
    FieldSpec("samples", "samples", _as_int, 100_000, "Laplace Monte-Carlo samples"),
    FieldSpec("steps", "steps", _as_int, 30, "moment table length"),
    FieldSpec("epsilon", "epsilon", _as_float, 0.5, "certificate confidence in (0, 1)"),
    FieldSpec("delta", "delta", _as_optional_float, None, "support certificate tolerance"),
    FieldSpec("certificate", "certificate", _as_str, "laplace", "one of " + ", ".join(CERTIFICATES)),
    FieldSpec("betas", "betas", _list_of(_as_float), (), "beta values for laplace/certify tables"),
    FieldSpec("grid_lambda", "grid_lambda", _list_of(_as_float), (0.1, 3.0), "stability grid lambda range"),
    FieldSpec("grid_h", "grid_h", _list_of(_as_float), (0.01, 3.0), "stability grid h range"),
    FieldSpec("grid_points", "grid_points", _as_int, 50, "stability grid points per axis"),
    FieldSpec("sweep_task", "sweep_task", _as_str, "run", "task run at each sweep point"),
    FieldSpec("sweep_beta", "sweep_beta", _list_of(_as_float), (), "sweep values for beta"),
    FieldSpec("sweep_h", "sweep_h", _list_of(_as_float), (), "sweep values for h"),
    FieldSpec("sweep_lambda", "sweep_lambda", _list_of(_as_float), (), "sweep values for lambda"),
    FieldSpec("sweep_sigma", "sweep_sigma", _list_of(_as_float), (), "sweep values for sigma"),
    FieldSpec("sweep_N", "sweep_N", _list_of(_as_int), (), "sweep values for N"),
)

FIELDS_BY_KEY: Dict[str, FieldSpec] = {f.key: f for f in FIELDS}
SWEEP_KEYS = ("beta", "h", "lambda", "sigma", "N")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Fully validated experiment settings.

    Attribute names follow the config keys except `lam` (key `lambda`) and
    `n_particles` (key `N`). warnings holds semantic notes collected while parsing.
    """
    task: str = "run"
    objective: str = "sphere_plus_one"
    dim: int = 2
    coefficients: Tuple[float, ...] = ()
    law: str = "uniform_box"
    law_lower: Tuple[float, ...] = (-1.0,)
    law_upper: Tuple[float, ...] = (1.0,)
    law_center: Tuple[float, ...] = (0.0,)
    law_radius: float = 1.0
    model: str = "ModelC"
    lam: float = 1.0
    sigma: float = 1.0
    h: float = 0.1
    gamma: Optional[float] = None
    zeta: Optional[float] = None
    beta: float = 50.0
    n_particles: int = 50
    replicas: int = 100
    max_steps: int = DEFAULT_MAX_STEPS
    consensus_tol: float = DEFAULT_CONSENSUS_TOL
    seed: int = 0
    out: str = "cbo-output"
    record_noise: bool = False
    samples: int = 100_000
    steps: int = 30
    epsilon: float = 0.5
    delta: Optional[float] = None
    certificate: str = "laplace"
    betas: Tuple[float, ...] = ()
    grid_lambda: Tuple[float, ...] = (0.1, 3.0)
    grid_h: Tuple[float, ...] = (0.01, 3.0)
    grid_points: int = 50
    sweep_task: str = "run"
    sweep_beta: Tuple[float, ...] = ()
    sweep_h: Tuple[float, ...] = ()
    sweep_lambda: Tuple[float, ...] = ()
    sweep_sigma: Tuple[float, ...] = ()
    sweep_N: Tuple[int, ...] = ()
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    def to_dict(self) -> Dict[str, Any]:
        """Values keyed by config key; lists become JSON arrays."""
        values = asdict(self)
        data: Dict[str, Any] = {}
        for entry in FIELDS:
            value = values[entry.attr]
            data[entry.key] = list(value) if isinstance(value, tuple) else value
        data["warnings"] = list(self.warnings)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        """Rebuild and revalidate a config echoed by to_dict()."""
        values = {k: v for k, v in data.items() if k not in ("warnings", "schema_version")}
        return build_config(values)

    def updated(self, changes: Mapping[str, Any]) -> ExperimentConfig:
        """Copy with some keys replaced, validated like a parsed file."""
        merged = {k: v for k, v in self.to_dict().items() if k != "warnings"}
        merged.update(changes)
        return build_config(merged)

    @property
    def model_kind(self) -> NoiseKind:
        return NoiseKind.from_name(self.model)

    def build_objective(self) -> Objective:
        if self.objective == "polynomial":
            return polynomial(self.coefficients, self.dim)
        return builtin(self.objective, self.dim)

    def build_law(self) -> InitialLaw:
        if self.law == LawKind.UNIFORM_BALL.value:
            return InitialLaw.ball(self.law_center, self.law_radius, self.dim)
        return InitialLaw.box(self.law_lower, self.law_upper, self.dim)

    def build_scheme(self) -> NoiseScheme:
        if self.model_kind is NoiseKind.GENERIC:
            assert self.gamma is not None and self.zeta is not None
            return generic_scheme(self.gamma, self.zeta)
        return make_scheme(self.model_kind, self.lam, self.sigma, self.h)

    def run_config(self) -> RunConfig:
        return RunConfig(
            beta=self.beta,
            scheme=self.build_scheme(),
            max_steps=self.max_steps,
            consensus_tol=self.consensus_tol,
            record_noise=self.record_noise,
            seed=self.seed,
        )

    def sweep_grid(self) -> Dict[str, Tuple[Any, ...]]:
        """Non-empty sweep axes keyed by the config key they override."""
        axes = {
            "beta": self.sweep_beta,
            "h": self.sweep_h,
            "lambda": self.sweep_lambda,
            "sigma": self.sweep_sigma,
            "N": self.sweep_N,
        }
        return {key: values for key, values in axes.items() if values}


# =============================================================================
# Parsing
# =============================================================================

def read_config_text(text: str, file_path: Optional[str] = None) -> Dict[str, str]:
    """Split config text into raw key/value strings."""
    return read_config_lines(text, file_path)[0]


def read_config_lines(text: str, file_path: Optional[str] = None) -> Tuple[Dict[str, str], Dict[str, int]]:
    """
    Split config text into raw key/value strings and the line each key was set on.

    Raises:
        ConfigError: malformed line, duplicate key or unknown key
    """
    values: Dict[str, str] = {}
    seen_at: Dict[str, int] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(
                f"expected 'key = value', got {content!r}",
                line_number=number,
                file_path=file_path,
            )
        key, raw = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", line_number=number, file_path=file_path)
        _check_known(key, number, file_path)
        if key in seen_at:
            raise ConfigError(
                f"duplicate key '{key}' (first set on line {seen_at[key]})",
                field=key,
                line_number=number,
                file_path=file_path,
            )
        seen_at[key] = number
        values[key] = raw
    return values, seen_at


def _check_known(key: str, line_number: Optional[int] = None, file_path: Optional[str] = None) -> None:
    if key not in FIELDS_BY_KEY:
        raise ConfigError(
            f"unknown key '{key}'",
            field=key,
            line_number=line_number,
            file_path=file_path,
            suggestions=suggest_names(key, list(FIELDS_BY_KEY)),
        )


def parse_overrides(assignments: Optional[list] = None) -> Dict[str, str]:
    """Turn repeated `KEY=VALUE` strings into a mapping."""
    values: Dict[str, str] = {}
    for item in assignments or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        _check_known(key)
        values[key] = raw
    return values


def parse_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """
    Read an optional config file, apply overrides and validate.

    Args:
        path: Config file; None starts from defaults
        overrides: Key/value pairs applied after the file

    Raises:
        ConfigError: unreadable file, syntax error or a value outside its constraint
    """
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    file_path = str(path) if path is not None else None
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e.strerror or e}", file_path=file_path) from e
        file_values, lines = read_config_lines(text, file_path)
        values.update(file_values)
    for key, value in (overrides or {}).items():
        _check_known(key)
        values[key] = value
        lines.pop(key, None)
    return build_config(values, file_path, lines)


def build_config(
    values: Mapping[str, Any],
    file_path: Optional[str] = None,
    lines: Optional[Mapping[str, int]] = None,
) -> ExperimentConfig:
    """
    Coerce and validate a key/value mapping.

    lines maps keys read from file_path to their line numbers, which value errors report.
    """
    lines = lines or {}
    typed: Dict[str, Any] = {}
    for key, raw in values.items():
        _check_known(key, file_path=file_path)
        entry = FIELDS_BY_KEY[key]
        try:
            typed[entry.attr] = entry.parse(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(
                f"invalid value {raw!r} for '{key}': {e}",
                field=key,
                line_number=lines.get(key),
                file_path=file_path,
            ) from e
    config = ExperimentConfig(**typed)
    try:
        warnings = _validate(config, file_path)
    except ConfigError as e:
        if e.field in lines and e.line_number is None:
            e.line_number = lines[e.field]
        raise
    for note in warnings:
        logger.warning(note)
    return ExperimentConfig(**{**typed, "warnings": tuple(warnings)})


def _fail(key: str, message: str, file_path: Optional[str], suggestions=None) -> ConfigError:
    return ConfigError(message, field=key, file_path=file_path, suggestions=suggestions)


def _check_choice(key: str, value: str, choices: Tuple[str, ...], file_path: Optional[str]) -> None:
    if value not in choices:
        raise _fail(
            key,
            f"{key} must be one of {', '.join(choices)}, got '{value}'",
            file_path,
            suggest_names(value, choices),
        )


def _validate(config: ExperimentConfig, file_path: Optional[str]) -> list:
    """Raise on the first violated constraint; return semantic warnings."""
    _check_choice("task", config.task, TASKS, file_path)
    _check_choice("objective", config.objective, OBJECTIVE_NAMES, file_path)
    _check_choice("law", config.law, LAW_NAMES, file_path)
    _check_choice("certificate", config.certificate, CERTIFICATES, file_path)
    _check_choice("sweep_task", config.sweep_task, SWEEP_TASKS, file_path)
    try:
        kind = config.model_kind
    except CBOError as e:
        raise _fail("model", e.message, file_path, suggest_names(config.model, MODEL_NAMES)) from e

    positive_ints = {
        "dim": config.dim,
        "N": config.n_particles,
        "replicas": config.replicas,
        "max_steps": config.max_steps,
        "samples": config.samples,
        "steps": config.steps,
        "grid_points": config.grid_points,
    }
    for key, value in positive_ints.items():
        if value < 1:
            raise _fail(key, f"{key} must be at least 1, got {value}", file_path)
    if not 0 <= config.seed <= U64_MAX:
        raise _fail("seed", f"seed must be an unsigned 64-bit integer, got {config.seed}", file_path)

    for key, value in (("beta", config.beta), ("consensus_tol", config.consensus_tol)):
        if value <= 0:
            raise _fail(key, f"{key} must be positive, got {value}", file_path)
    if not 0 < config.epsilon < 1:
        raise _fail("epsilon", f"epsilon must lie in (0, 1), got {config.epsilon}", file_path)
    if config.delta is not None and config.delta <= 0:
        raise _fail("delta", f"delta must be positive, got {config.delta}", file_path)
    if any(b <= 0 for b in config.betas + config.sweep_beta):
        raise _fail("betas", "beta values must be positive", file_path)
    if any(n < 1 for n in config.sweep_N):
        raise _fail("sweep_N", "sweep_N values must be at least 1", file_path)
    for key, bounds in (("grid_lambda", config.grid_lambda), ("grid_h", config.grid_h)):
        if len(bounds) != 2 or not 0 < bounds[0] < bounds[1]:
            raise _fail(key, f"{key} must be 'low, high' with 0 < low < high", file_path)

    if config.task == "certify" and config.replicas < 100:
        raise _fail("replicas", f"certify needs replicas >= 100, got {config.replicas}", file_path)
    if config.task == "certify" and config.certificate != "laplace" and config.delta is None:
        raise _fail("delta", f"the {config.certificate} certificate needs delta", file_path)
    if config.task == "sweep" and not config.sweep_grid():
        raise _fail("sweep_beta", "sweep needs at least one non-empty sweep_* list", file_path)

    try:
        config.build_objective()
        config.build_law()
    except CBOError as e:
        key = "coefficients" if config.objective == "polynomial" else "law"
        if "dim" in e.message:
            key = "dim"
        raise _fail(key, e.message, file_path, e.suggestions) from e

    warnings = []
    if kind is NoiseKind.GENERIC:
        if config.gamma is None or config.zeta is None:
            raise _fail("gamma", "GenericGaussian needs both gamma and zeta", file_path)
        if config.zeta < 0:
            raise _fail("zeta", f"zeta must be non-negative, got {config.zeta}", file_path)
        scheme = config.build_scheme()
        if scheme.l2_factor >= 1.0:
            warnings.append(
                f"(1-gamma)^2 + zeta^2 = {scheme.l2_factor:.6g} >= 1: the scheme is not L2 stable"
            )
    else:
        for key, value in (("lambda", config.lam), ("h", config.h)):
            if value <= 0:
                raise _fail(key, f"{key} must be positive, got {value}", file_path)
        if config.sigma < 0:
            raise _fail("sigma", f"sigma must be non-negative, got {config.sigma}", file_path)
        if kind is NoiseKind.MODEL_A:
            h_max = stability_boundary_modelA(config.lam, config.sigma)
            if config.h >= h_max:
                warnings.append(
                    f"ModelA with h={config.h:g} is outside its stable region h < {h_max:.6g}"
                )
    return warnings


def describe_keys() -> str:
    """One line per accepted key, for --help epilogs."""
    width = max(len(f.key) for f in FIELDS)
    return "\n".join(f"  {f.key.ljust(width)}  {f.help} (default: {f.default!r})" for f in FIELDS)
