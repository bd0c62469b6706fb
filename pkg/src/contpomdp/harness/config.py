"""Experiment configuration and the per-domain solver defaults.

Config files are plain text::

    # comments start with '#' or ';'
    [experiment]
    domain = subhunt
    solver = pomcpow
    episodes = 200

    [solver]
    c = 50
    alpha_o = 1/100

    [domain]
    size = 10

Sections named after a solver (``[pft_dpw]``) or a domain (``[vdptag]``)
apply only when that solver or domain is selected and override the generic
``[solver]`` / ``[domain]`` sections.  Numbers may be written as fractions.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from contpomdp.core import ConfigurationError
from contpomdp.domains import EPISODE_CAPS, REGISTRY, domain_parameters
from contpomdp.solvers import ALGORITHMS, SolverConfig

BASELINES = ("qmdp", "random")
SOLVERS = ALGORITHMS + BASELINES

_ALIASES = {s.replace("_", "-"): s for s in SOLVERS} | {"pomcp-d": "pomcp", "pomcp_d": "pomcp", "pft": "pft_dpw"}

# Tuned values per (domain, solver); tree solvers without their own row reuse
# the POMCPOW one.
HYPERPARAMETERS = {
    ("lightdark", "pomcpow"): {"c": 90.0, "k_o": 5.0, "alpha_o": 1 / 15},
    ("subhunt", "pomcpow"): {"c": 17.0, "k_o": 6.0, "alpha_o": 1 / 100},
    ("vdptag", "pomcpow"): {"c": 110.0, "k_a": 30.0, "alpha_a": 1 / 30, "k_o": 5.0, "alpha_o": 1 / 100},
    ("lightdark", "pft_dpw"): {"m": 20, "c": 100.0, "k_o": 4.0, "alpha_o": 1 / 10},
    ("subhunt", "pft_dpw"): {"m": 20, "c": 100.0, "k_o": 2.0, "alpha_o": 1 / 10},
    ("vdptag", "pft_dpw"): {"m": 20, "c": 70.0, "k_a": 20.0, "alpha_a": 1 / 25, "k_o": 8.0, "alpha_o": 1 / 85},
}

SEARCH_DEPTH = {"lightdark": 20, "subhunt": 20, "vdptag": 10}

# observation bin width used by discretized POMCP when none is configured
DEFAULT_OBS_WIDTH = {"lightdark": 0.5, "subhunt": 2.0, "vdptag": 2.0}
DEFAULT_HEADINGS = 8

DEFAULT_ITERATIONS = 1000
DEFAULT_FILTER_PARTICLES = 10_000


def canonical_solver(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in SOLVERS:
        raise ConfigurationError(f"unknown solver {name!r}; registered: {', '.join(SOLVERS)}")
    return key


def solver_defaults(domain: str, solver: str) -> dict:
    """Default :class:`SolverConfig` fields for a (domain, solver) pair."""
    if domain not in REGISTRY:
        raise ConfigurationError(f"unknown domain {domain!r}; registered: {', '.join(REGISTRY)}")
    solver = canonical_solver(solver)
    row = HYPERPARAMETERS.get((domain, solver)) or HYPERPARAMETERS[(domain, "pomcpow")]
    return {"d_max": SEARCH_DEPTH[domain], "iterations": DEFAULT_ITERATIONS, **row}


def default_solver_config(domain: str, solver: str, **changes) -> SolverConfig:
    params = solver_defaults(domain, solver)
    if changes.get("time_budget_ms") is not None:
        params["iterations"] = None
    params.update(changes)
    return SolverConfig(**params)


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's output."""

    domain: str = "lightdark"
    solver: str = "pomcpow"
    episodes: int = 10
    seed: int = 0
    max_steps: int | None = None
    filter_particles: int = DEFAULT_FILTER_PARTICLES
    small: bool = False
    obs_width: float | None = None
    action_headings: int = DEFAULT_HEADINGS
    workers: int = 1
    qtable: str | None = None
    vi_tol: float = 1e-3
    out: str | None = None
    tree_dump: str | None = None
    domain_overrides: dict = field(default_factory=dict)
    solver_config: SolverConfig | None = None

    def __post_init__(self):
        self.solver = canonical_solver(self.solver)
        if self.domain not in REGISTRY:
            raise ConfigurationError(f"unknown domain {self.domain!r}; registered: {', '.join(REGISTRY)}")
        if self.episodes < 1:
            raise ConfigurationError("episodes must be >= 1")
        if self.filter_particles < 1:
            raise ConfigurationError("filter_particles must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")
        if self.obs_width is not None and not self.obs_width > 0:
            raise ConfigurationError("obs_width must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.solver_config is None:
            self.solver_config = default_solver_config(self.domain, self.solver)

    @property
    def step_cap(self) -> int:
        return self.max_steps if self.max_steps is not None else EPISODE_CAPS[self.domain]

    def replace(self, **changes) -> ExperimentConfig:
        """Copy with changes.

        Switching domain or solver (or passing ``solver_config=None``) resets
        the hyperparameters to that pair's defaults but keeps the search budget.
        """
        resetting = changes.get("solver_config", ...) is None or (
            ("domain" in changes or "solver" in changes) and "solver_config" not in changes
        )
        if resetting:
            old = self.solver_config
            changes["solver_config"] = default_solver_config(
                changes.get("domain", self.domain), changes.get("solver", self.solver),
                iterations=old.iterations, time_budget_ms=old.time_budget_ms,
            )
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# Parsing

_EXPERIMENT_KEYS = {
    "domain": str, "solver": str, "episodes": int, "seed": int, "max_steps": int,
    "filter_particles": int, "small": bool, "obs_width": float, "action_headings": int,
    "workers": int, "qtable": str, "vi_tol": float, "out": str, "tree_dump": str,
}
_SOLVER_KEYS = {
    "c": float, "k_a": float, "alpha_a": float, "k_o": float, "alpha_o": float, "m": int,
    "d_max": int, "iterations": int, "time_budget_ms": float, "seed": int, "rollout": str,
    "widen_actions": bool, "widen_observations": bool,
    "alpha_a_schedule": tuple, "alpha_o_schedule": tuple, "e_schedule": tuple,
}


class ConfigParseError(ConfigurationError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def _number(text: str) -> float:
    return float(Fraction(text.strip()))


def _convert(kind, text: str):
    text = text.strip()
    if kind is str:
        return text
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        value = _number(text)
        if value != int(value):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if kind is tuple:
        return tuple(_number(t) for t in text.replace(",", " ").split())
    return _number(text)


def _read_sections(path) -> dict:
    """``{section: {key: (value_text, line_number)}}`` preserving the file order."""
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigParseError(path, lineno, f"malformed section header {line!r}")
            current = line[1:-1].strip().lower()
            sections.setdefault(current, {})
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigParseError(path, lineno, f"expected 'key = value', got {line!r}")
        if current is None:
            current = "experiment"
            sections.setdefault(current, {})
        key = key.strip().lower()
        if key in sections[current]:
            raise ConfigParseError(path, lineno, f"duplicate key {key!r}")
        sections[current][key] = (value.split("#", 1)[0].strip(), lineno)
    return sections


def load_config(path, **overrides) -> ExperimentConfig:
    """Parse a config file; keyword ``overrides`` win over file values (CLI flags).

    Unspecified solver hyperparameters take the per-domain defaults.
    """
    sections = _read_sections(path)
    for name, entries in sections.items():
        if name not in ("experiment", "solver", "domain") and name not in SOLVERS and name not in REGISTRY:
            line = min(ln for _, ln in entries.values()) if entries else 1
            raise ConfigParseError(path, line, f"unknown section [{name}]")

    exp: dict = {}
    for key, (text, line) in sections.get("experiment", {}).items():
        if key not in _EXPERIMENT_KEYS:
            raise ConfigParseError(path, line, f"unknown experiment key {key!r}")
        try:
            exp[key] = _convert(_EXPERIMENT_KEYS[key], text)
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigParseError(path, line, f"{key}: {e}") from None
    exp.update({k: v for k, v in overrides.items() if v is not None and k in _EXPERIMENT_KEYS})
    domain = exp.get("domain", ExperimentConfig.domain)
    try:
        solver = canonical_solver(exp.get("solver", ExperimentConfig.solver))
        defaults = solver_defaults(domain, solver)
    except ConfigurationError as e:
        line = sections.get("experiment", {}).get("domain", (None, 1))[1]
        raise ConfigParseError(path, line, str(e)) from None

    solver_params = dict(defaults)
    for section in ("solver", solver):
        for key, (text, line) in sections.get(section, {}).items():
            if key not in _SOLVER_KEYS:
                raise ConfigParseError(path, line, f"unknown solver key {key!r}")
            try:
                solver_params[key] = _convert(_SOLVER_KEYS[key], text)
                trial = {**solver_params, **_budget_fix(solver_params, key)}
                if not key.endswith("_schedule"):
                    trial = {k: v for k, v in trial.items() if not k.endswith("_schedule")}
                SolverConfig(**trial)
            except (ValueError, ZeroDivisionError) as e:
                raise ConfigParseError(path, line, f"{key}: {e}") from None
            solver_params.update(_budget_fix(solver_params, key))
    for key in ("iterations", "time_budget_ms"):
        if overrides.get(key) is not None:
            solver_params[key] = overrides[key]
            solver_params.update(_budget_fix(solver_params, key))

    known = domain_parameters(domain)
    dom: dict = {}
    for section in ("domain", domain):
        for key, (text, line) in sections.get(section, {}).items():
            if key not in known:
                raise ConfigParseError(path, line, f"unknown {domain} parameter {key!r}")
            kind = type(known[key]) if known[key] is not None else float
            try:
                dom[key] = _convert(kind, text)
            except (ValueError, ZeroDivisionError) as e:
                raise ConfigParseError(path, line, f"{key}: {e}") from None

    exp["solver"] = solver
    try:
        return ExperimentConfig(**exp, domain_overrides=dom, solver_config=SolverConfig(**solver_params))
    except ConfigurationError as e:
        raise ConfigParseError(path, 1, str(e)) from None


def _budget_fix(params: dict, key: str) -> dict:
    """Setting one budget kind clears the other."""
    if key == "time_budget_ms" and params.get("time_budget_ms") is not None:
        return {"iterations": None}
    if key == "iterations" and params.get("iterations") is not None:
        return {"time_budget_ms": None}
    return {}
