"""Experiment configuration: registry, TOML files, presets, validation.

One registry describes every key: its type, default, allowed values, and
help text. The same registry drives the command-line flags, the TOML file
parser, the validator, and the echo of the effective configuration into
the output directory, so the four can not drift apart.

Precedence, lowest to highest: built-in defaults, the experiment preset,
the TOML file, command-line flags.

Dotted keys (``prox.solver``) live in the corresponding TOML table::

    [prox]
    solver = "newton"

``kappa`` and ``alpha`` may equivalently be written ``prox.kappa`` and
``prox.alpha``; conflicting duplicates are an error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

try:
    import tomllib
except ImportError:  # python 3.10
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "KeySpec",
    "REGISTRY",
    "PRESETS",
    "ExperimentConfig",
    "load_config",
    "dump_toml",
]


class ConfigError(Exception):
    """A configuration value is missing, unknown, or out of range."""


@dataclass(frozen=True)
class KeySpec:
    name: str                      # registry name, dots for table nesting
    type: type                     # int, float or str
    default: Any                   # None means "unset"
    help: str
    choices: tuple[str, ...] | None = None
    optional: bool = False         # None stays None unless given

    @property
    def attr(self) -> str:
        return self.name.replace(".", "_")

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


REGISTRY: tuple[KeySpec, ...] = (
    KeySpec("experiment", str, "custom",
            "named experiment preset or 'custom'",
            choices=("example1", "example2", "example3", "theory", "custom")),
    KeySpec("potential", str, "gaussian", "target potential",
            choices=("gaussian", "quartic", "ginzburg_landau", "deconvolution")),
    KeySpec("sampler", str, "ipla", "sampling kernel",
            choices=("ipla", "ula", "tula", "mh")),
    KeySpec("d", int, 10, "dimension for the gaussian/quartic potentials"),
    KeySpec("q", int, 3, "lattice side for the ginzburg_landau potential"),
    KeySpec("varkappa", float, 0.1, "lattice coupling strength"),
    KeySpec("varsigma", float, 0.5, "lattice quartic weight"),
    KeySpec("upsilon", float, 2.0, "lattice interpolation parameter"),
    KeySpec("tau", float, 0.1, "step size"),
    KeySpec("kappa", float, 1.0,
            "proximal accuracy scale: delta = kappa * tau^(1+alpha)"),
    KeySpec("alpha", float, 1.0, "proximal accuracy exponent"),
    KeySpec("n_steps", int, 10000, "steps per replica"),
    KeySpec("burn_in", int, 1000, "steps discarded before averaging"),
    KeySpec("thinning", int, 1, "keep every thinning-th post-burn-in sample"),
    KeySpec("replicas", int, 4, "independent replicas"),
    KeySpec("base_seed", int, 0, "base seed; replica r uses stream (seed, r)"),
    KeySpec("scenario", str, "minimizer", "initial point",
            choices=("minimizer", "tail")),
    KeySpec("taming", str, "tau", "drift taming for tula",
            choices=("tau", "plain")),
    KeySpec("proposal_std", float, None,
            "random-walk proposal scale (default 0.5/sqrt(d))", optional=True),
    KeySpec("workers", int, 1, "worker processes for replicas"),
    KeySpec("trajectories", str, "first", "which per-step chain files to write",
            choices=("first", "all", "none")),
    KeySpec("prox.solver", str, "gd", "inner proximal solver",
            choices=("exact", "gd", "newton", "pdhg")),
    KeySpec("prox.delta_abs", float, None,
            "fixed proximal accuracy, overrides the schedule", optional=True),
    KeySpec("prox.max_iterations", int, 500, "inner iteration cap"),
    KeySpec("prox.max_failure_rate", float, 0.02,
            "abort threshold for uncertified proximal steps (imaging runs)"),
    KeySpec("side", int, 64, "image side length"),
    KeySpec("psf_depth", int, 9, "blur kernel diameter (odd)"),
    KeySpec("sigma", float, 0.5, "observation noise level"),
    KeySpec("beta", float, 0.03, "total-variation weight"),
    KeySpec("image_seed", int, 0, "seed for the synthetic observation"),
    KeySpec("q_v", float, 1.0, "growth order of the potential (theory)"),
    KeySpec("lambda_v", float, 1.0, "convexity constant (theory)"),
    KeySpec("r_v", float, 0.0, "convexity exclusion radius (theory)"),
    KeySpec("c_v", float, 1.0, "growth constant of grad V (theory)"),
    KeySpec("l_q", float, 1.0, "polynomial Lipschitz constant (theory)"),
    KeySpec("m0", float, 0.0, "squared norm of the start point (theory)"),
    KeySpec("w2_init", float, None,
            "squared Wasserstein distance of the start (default: dim)",
            optional=True),
    KeySpec("eps", float, 0.1, "target accuracy for the budgets"),
    KeySpec("output_dir", str, "out", "directory for result files"),
)

_BY_NAME = {k.name: k for k in REGISTRY}
_ALIASES = {"prox.kappa": "kappa", "prox.alpha": "alpha"}

PRESETS: dict[str, dict[str, Any]] = {
    "example1": {
        "potential": "quartic", "sampler": "ipla", "d": 10,
        "tau": 0.1, "kappa": 1.0, "alpha": 1.0,
        "n_steps": 100_000, "burn_in": 10_000, "replicas": 20,
        "scenario": "tail", "prox.solver": "exact",
        "q_v": 3.0, "lambda_v": 1.0, "r_v": 1.0, "c_v": 3.0, "l_q": 3.0,
    },
    "example2": {
        "potential": "ginzburg_landau", "sampler": "ipla", "q": 3,
        "tau": 0.0125, "kappa": 1.0, "alpha": 1.0,
        "n_steps": 20_000, "burn_in": 10_000, "replicas": 4,
        "scenario": "tail", "prox.solver": "gd",
        "q_v": 3.0, "c_v": 4.7, "l_q": 6.0,
    },
    "example3": {
        "potential": "deconvolution", "sampler": "ipla",
        "side": 64, "psf_depth": 9, "sigma": 0.5, "beta": 0.03,
        "tau": 0.1, "prox.delta_abs": 0.1, "prox.solver": "pdhg",
        "n_steps": 550, "burn_in": 50, "replicas": 1, "thinning": 10,
        "scenario": "minimizer", "q_v": 1.0, "lambda_v": 0.0,
    },
    "theory": {
        "potential": "quartic", "d": 10,
        "q_v": 3.0, "lambda_v": 1.0, "r_v": 1.0, "c_v": 3.0, "l_q": 3.0,
    },
    "custom": {},
}


class ExperimentConfig:
    """Effective configuration; one attribute per registry key."""

    def __init__(self, values: dict[str, Any]):
        for spec in REGISTRY:
            setattr(self, spec.attr, values[spec.name])

    def as_dict(self) -> dict[str, Any]:
        return {spec.name: getattr(self, spec.attr) for spec in REGISTRY}

    @property
    def problem_dim(self) -> int:
        if self.potential == "ginzburg_landau":
            return self.q ** 3
        if self.potential == "deconvolution":
            return self.side ** 2
        return self.d


def _coerce(spec: KeySpec, raw: Any, where: str) -> Any:
    if spec.type is float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {raw!r}")
        return float(raw)
    if spec.type is int:
        if isinstance(raw, bool) or not isinstance(raw, int):
            if isinstance(raw, float) and raw.is_integer():
                return int(raw)
            raise ConfigError(f"{where}: expected an integer, got {raw!r}")
        return int(raw)
    if not isinstance(raw, str):
        raise ConfigError(f"{where}: expected a string, got {raw!r}")
    if spec.choices and raw not in spec.choices:
        raise ConfigError(
            f"{where}: {raw!r} is not one of {', '.join(spec.choices)}"
        )
    return raw


def _find_line(text: str, key: str) -> str:
    """Best-effort '(line N)' suffix for error messages about a TOML key."""
    leaf = key.split(".")[-1]
    for i, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*{re.escape(leaf)}\s*=", line):
            return f" (line {i})"
    return ""


def _flatten_toml(doc: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, val in doc.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            flat.update(_flatten_toml(val, prefix=f"{name}."))
        else:
            flat[name] = val
    return flat


def _read_file(path: str | Path) -> dict[str, Any]:
    text = Path(path).read_text()
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    flat = _flatten_toml(doc)
    values: dict[str, Any] = {}
    for name, raw in flat.items():
        canonical = _ALIASES.get(name, name)
        spec = _BY_NAME.get(canonical)
        if spec is None:
            raise ConfigError(
                f"{path}: unknown key '{name}'{_find_line(text, name)}"
            )
        val = _coerce(spec, raw, f"{path}: key '{name}'{_find_line(text, name)}")
        if canonical in values and values[canonical] != val:
            raise ConfigError(
                f"{path}: '{name}' conflicts with its alias"
                f"{_find_line(text, name)}"
            )
        values[canonical] = val
    return values


def _validate(cfg: ExperimentConfig):
    checks = [
        (cfg.tau > 0, "tau must be positive"),
        (cfg.kappa >= 0, "kappa must be nonnegative"),
        (cfg.alpha > 0, "alpha must be positive"),
        (cfg.n_steps >= 1, "n_steps must be at least 1"),
        (cfg.burn_in >= 0, "burn_in must be nonnegative"),
        (cfg.burn_in < cfg.n_steps, "burn_in must be smaller than n_steps"),
        (cfg.thinning >= 1, "thinning must be at least 1"),
        (cfg.replicas >= 1, "replicas must be at least 1"),
        (cfg.workers >= 1, "workers must be at least 1"),
        (cfg.d >= 1, "d must be at least 1"),
        (cfg.q >= 1, "q must be at least 1"),
        (cfg.side >= 8, "side must be at least 8"),
        (cfg.psf_depth % 2 == 1 and 0 < cfg.psf_depth < cfg.side,
         "psf_depth must be odd and smaller than side"),
        (cfg.sigma > 0, "sigma must be positive"),
        (cfg.beta >= 0, "beta must be nonnegative"),
        (cfg.prox_max_iterations >= 1, "prox.max_iterations must be at least 1"),
        (0 <= cfg.prox_max_failure_rate <= 1,
         "prox.max_failure_rate must be in [0, 1]"),
        (cfg.prox_delta_abs is None or cfg.prox_delta_abs > 0,
         "prox.delta_abs must be positive when set"),
        (cfg.proposal_std is None or cfg.proposal_std > 0,
         "proposal_std must be positive when set"),
        (cfg.q_v >= 1, "q_v must be at least 1"),
        (cfg.lambda_v >= 0, "lambda_v must be nonnegative"),
        (cfg.r_v >= 0, "r_v must be nonnegative"),
        (cfg.c_v > 0, "c_v must be positive"),
        (cfg.l_q > 0, "l_q must be positive"),
        (cfg.m0 >= 0, "m0 must be nonnegative"),
        (cfg.w2_init is None or cfg.w2_init > 0,
         "w2_init must be positive when set"),
        (cfg.eps > 0, "eps must be positive"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    if cfg.sampler == "ipla" and cfg.prox_delta_abs is None and cfg.kappa <= 0:
        raise ConfigError(
            "the proximal kernel needs kappa > 0 or an explicit prox.delta_abs"
        )


def load_config(
    file: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> ExperimentConfig:
    """Resolve defaults, preset, file, and overrides into a validated config."""
    file_values = _read_file(file) if file is not None else {}
    overrides = dict(overrides or {})
    for name, canonical in _ALIASES.items():
        if name in overrides:
            val = overrides.pop(name)
            if canonical in overrides and overrides[canonical] != val:
                raise ConfigError(f"'{name}' conflicts with '{canonical}'")
            overrides[canonical] = val
    for name, raw in overrides.items():
        spec = _BY_NAME.get(name)
        if spec is None:
            raise ConfigError(f"unknown key '{name}'")
        overrides[name] = _coerce(spec, raw, f"key '{name}'")

    experiment = overrides.get(
        "experiment", file_values.get("experiment", "custom")
    )
    if experiment not in PRESETS:
        raise ConfigError(
            f"unknown experiment '{experiment}'; "
            f"choose from {', '.join(sorted(PRESETS))}"
        )
    values = {spec.name: spec.default for spec in REGISTRY}
    values.update(PRESETS[experiment])
    values.update(file_values)
    values.update(overrides)
    values["experiment"] = experiment

    cfg = ExperimentConfig(values)
    _validate(cfg)
    return cfg


def _toml_scalar(value: Any) -> str:
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_toml(cfg: ExperimentConfig) -> str:
    """Resolved configuration as TOML; unset optional keys are omitted."""
    top: list[str] = []
    tables: dict[str, list[str]] = {}
    for spec in REGISTRY:
        value = getattr(cfg, spec.attr)
        if value is None:
            continue
        line = f"{spec.name.split('.')[-1]} = {_toml_scalar(value)}"
        if "." in spec.name:
            tables.setdefault(spec.name.split(".")[0], []).append(line)
        else:
            top.append(line)
    parts = ["\n".join(top)]
    for table in sorted(tables):
        parts.append(f"\n[{table}]\n" + "\n".join(tables[table]))
    return "\n".join(parts) + "\n"
