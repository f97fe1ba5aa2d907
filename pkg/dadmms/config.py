"""
Experiment configuration: TOML schema, validation and published hyperparameter defaults.

See docs/config.md for the full schema.
"""

import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from .graph import TOPOLOGY_KINDS, Topology, build_topology, topology_from_edges
from .problems import Problem, generate_linreg, generate_logreg
from .samplers import ALGORITHMS, HYPER_TYPES, INIT_KINDS, Hyper

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

PROBLEM_KINDS = ("linreg", "logreg")
WORKERS_ENV = "DADMMS_WORKERS"

HYPER_FIELDS = {
    "dadmms": ("rho",),
    "admm": ("rho",),
    "dsgld": ("eta",),
    "dsghmc": ("eta", "gamma"),
    "dula": ("alpha0", "zeta0", "chi1", "chi2", "offset"),
}

_DEFAULTS = {
    "linreg": {
        "dadmms": {"rho": 5.0},
        "admm": {"rho": 5.0},
        "dsgld": {"eta": 0.009},
        "dsghmc": {"eta": 0.1, "gamma": 7.0},
    },
    "logreg": {
        "dadmms": {"rho": 5.0},
        "admm": {"rho": 5.0},
        "dsgld": {"eta": 0.0003},
        "dsghmc": {"eta": 0.02, "gamma": 30.0},
    },
}

_DULA_BASE = {"alpha0": 0.00082, "zeta0": 0.48, "offset": 230.0}
_DULA_FULLY_CONNECTED = {
    "linreg": {5: (0.55, 0.05), 20: (0.55, 0.05)},
    "logreg": {5: (0.55, 0.05), 20: (0.55, 0.05), 50: (0.9, 0.9)},
}


class ConfigError(ValueError):
    """Schema violation; the message starts with the dotted field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def published_default_values(algorithm: str, problem_kind: str, topology_kind: str, n_agents: int) -> Dict[str, float]:
    """
    Published hyperparameters for an (algorithm, problem, topology) combination.

    Raises:
        ConfigError: For fully connected D-ULA with an agent count without published exponents.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError("algorithm.name", f"unknown algorithm {algorithm!r}")
    if problem_kind not in PROBLEM_KINDS:
        raise ConfigError("problem.kind", f"unknown problem kind {problem_kind!r}")
    if algorithm != "dula":
        return dict(_DEFAULTS[problem_kind][algorithm])
    values = dict(_DULA_BASE)
    if topology_kind == "fully_connected":
        exponents = _DULA_FULLY_CONNECTED[problem_kind].get(n_agents)
        if exponents is None:
            raise ConfigError(
                "algorithm.chi1",
                f"no published D-ULA exponents for fully connected N={n_agents}; set chi1 and chi2",
            )
        values["chi1"], values["chi2"] = exponents
    else:
        values["chi1"] = values["chi2"] = 0.05
    return values


def published_defaults(algorithm: str, problem_kind: str, topology_kind: str, n_agents: int) -> Hyper:
    """
    Hyperparameter object with the published values.

    Example:
        >>> published_defaults("dsghmc", "linreg", "ring_cyclic", 5)
        DsghmcHyper(eta=0.1, gamma=7.0)
    """
    return HYPER_TYPES[algorithm](**published_default_values(algorithm, problem_kind, topology_kind, n_agents))


@dataclass
class ProblemConfig:
    kind: str = "linreg"
    d: int = 2
    xi: float = 4.0
    lambda_prior: float = 10.0
    n_per_agent: Union[int, List[int]] = 50
    data_seed: int = 0

    def build(self, n_agents: int) -> Problem:
        if self.kind == "linreg":
            return generate_linreg(self.d, self.xi, self.lambda_prior, n_agents, self.n_per_agent, self.data_seed)
        return generate_logreg(self.d, self.lambda_prior, n_agents, self.n_per_agent, self.data_seed)


@dataclass
class TopologyConfig:
    kind: str = "ring_cyclic"
    n_agents: int = 5
    edges: Optional[List[Tuple[int, int]]] = None

    def build(self) -> Topology:
        if self.kind == "custom":
            return topology_from_edges(self.n_agents, self.edges or [], kind="custom")
        return build_topology(self.kind, self.n_agents)


@dataclass
class AlgorithmConfig:
    name: str = "dadmms"
    params: Dict[str, float] = field(default_factory=dict)
    use_published_defaults: bool = False

    def hyper(self, problem_kind: str, topology_kind: str, n_agents: int) -> Hyper:
        """Resolve explicit values, falling back to published defaults when enabled."""
        values: Dict[str, float] = {}
        if self.use_published_defaults:
            missing = [f for f in HYPER_FIELDS[self.name] if f not in self.params]
            if self.name == "dula" and {"chi1", "chi2"} <= set(self.params):
                values.update(_DULA_BASE)
            elif missing:
                values.update(published_default_values(self.name, problem_kind, topology_kind, n_agents))
        values.update(self.params)
        if self.name == "dula":
            values.setdefault("offset", _DULA_BASE["offset"])
        for name in HYPER_FIELDS[self.name]:
            if name not in values:
                raise ConfigError(f"algorithm.{name}", f"required for {self.name}")
        try:
            return HYPER_TYPES[self.name](**{k: values[k] for k in HYPER_FIELDS[self.name]})
        except ValueError as err:
            raise ConfigError(f"algorithm.{self.name}", str(err)) from err


@dataclass
class RunConfig:
    n_trials: int = 100
    n_iters: Optional[int] = None
    seed: int = 0
    output: Optional[str] = None
    thin: int = 1
    workers: int = 1
    raw_dump: bool = False
    init: str = "standard"
    init_mean: Optional[List[float]] = None
    init_cov: Optional[List[List[float]]] = None
    init_scale: float = 10.0


@dataclass
class TheoryConfig:
    m_f: Optional[float] = None
    tau_f: Optional[float] = None
    kappa: Optional[float] = None
    rho: Optional[float] = None
    mc_samples: int = 100_000


@dataclass
class ExperimentConfig:
    """A fully validated experiment description."""

    problem: ProblemConfig = field(default_factory=ProblemConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    run: RunConfig = field(default_factory=RunConfig)
    compare: List[AlgorithmConfig] = field(default_factory=list)
    theory: TheoryConfig = field(default_factory=TheoryConfig)
    sweep_rho: List[float] = field(default_factory=list)
    source: Optional[str] = None

    @property
    def n_iters(self) -> int:
        if self.run.n_iters is not None:
            return self.run.n_iters
        return 100 if self.problem.kind == "linreg" else 200

    def hyper(self, algorithm: Optional[AlgorithmConfig] = None) -> Hyper:
        alg = algorithm or self.algorithm
        return alg.hyper(self.problem.kind, self.topology.kind, self.topology.n_agents)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Return a copy with ``[run]`` keys replaced; None values are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        run = replace(self.run, **changes)
        _validate_run(run)
        return replace(self, run=run)


def _section(data: Mapping[str, Any], name: str) -> Dict[str, Any]:
    value = data.get(name, {})
    if not isinstance(value, Mapping):
        raise ConfigError(name, "must be a table")
    return dict(value)


def _take(table: Dict[str, Any], path: str, key: str, kind, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}", "is required")
        return default
    value = table.pop(key)
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind in (int, float):
        raise ConfigError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}, got {value!r}")
    return value


def _no_leftovers(table: Mapping[str, Any], path: str):
    if table:
        raise ConfigError(f"{path}.{sorted(table)[0]}", "unknown key")


def _parse_problem(data: Mapping[str, Any]) -> ProblemConfig:
    t = _section(data, "problem")
    cfg = ProblemConfig(
        kind=_take(t, "problem", "kind", str, "linreg"),
        d=_take(t, "problem", "d", int, 2),
        xi=_take(t, "problem", "xi", float, 4.0),
        lambda_prior=_take(t, "problem", "lambda_prior", float, 10.0),
        n_per_agent=_take(t, "problem", "n_per_agent", (int, list), 50),
        data_seed=_take(t, "problem", "data_seed", int, 0),
    )
    _no_leftovers(t, "problem")
    if cfg.kind not in PROBLEM_KINDS:
        raise ConfigError("problem.kind", f"must be one of {PROBLEM_KINDS}")
    if cfg.d < 1:
        raise ConfigError("problem.d", "must be at least 1")
    if cfg.kind == "linreg" and cfg.xi <= 0:
        raise ConfigError("problem.xi", "must be positive")
    if cfg.lambda_prior <= 0:
        raise ConfigError("problem.lambda_prior", "must be positive")
    if cfg.data_seed < 0:
        raise ConfigError("problem.data_seed", "must be non-negative")
    return cfg


def _parse_topology(data: Mapping[str, Any]) -> TopologyConfig:
    t = _section(data, "topology")
    cfg = TopologyConfig(
        kind=_take(t, "topology", "kind", str, "ring_cyclic"),
        n_agents=_take(t, "topology", "n_agents", int, 5),
        edges=_take(t, "topology", "edges", list, None),
    )
    _no_leftovers(t, "topology")
    if cfg.kind not in TOPOLOGY_KINDS:
        raise ConfigError("topology.kind", f"must be one of {TOPOLOGY_KINDS}")
    if cfg.n_agents < 1:
        raise ConfigError("topology.n_agents", "must be at least 1")
    if cfg.kind == "custom" and cfg.edges is None:
        raise ConfigError("topology.edges", "is required for custom topologies")
    if cfg.edges is not None:
        if cfg.kind != "custom":
            raise ConfigError("topology.edges", "only allowed for custom topologies")
        cfg.edges = [tuple(int(v) for v in e) for e in cfg.edges]
    return cfg


def _parse_algorithm(table: Dict[str, Any], path: str) -> AlgorithmConfig:
    t = dict(table)
    name = _take(t, path, "name", str, "dadmms")
    if name not in ALGORITHMS:
        raise ConfigError(f"{path}.name", f"must be one of {ALGORITHMS}")
    use_defaults = _take(t, path, "use_published_defaults", bool, False)
    t = {k: v for k, v in t.items() if not isinstance(v, Mapping)}
    params: Dict[str, float] = {}
    for key in list(t):
        if key not in HYPER_FIELDS[name]:
            raise ConfigError(f"{path}.{key}", f"not a hyperparameter of {name}")
        params[key] = _take(t, path, key, float)
    return AlgorithmConfig(name=name, params=params, use_published_defaults=use_defaults)


def _validate_run(run: RunConfig):
    if run.n_trials < 2:
        raise ConfigError("run.n_trials", "must be at least 2")
    if run.n_iters is not None and run.n_iters < 1:
        raise ConfigError("run.n_iters", "must be at least 1")
    if run.seed < 0:
        raise ConfigError("run.seed", "must be non-negative")
    if run.thin < 1:
        raise ConfigError("run.thin", "must be at least 1")
    if run.workers < 1:
        raise ConfigError("run.workers", "must be at least 1")
    if run.init not in INIT_KINDS:
        raise ConfigError("run.init", f"must be one of {INIT_KINDS}")
    if run.init_scale <= 0:
        raise ConfigError("run.init_scale", "must be positive")


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected an integer, got {raw!r}")


def _parse_run(data: Mapping[str, Any]) -> RunConfig:
    t = _section(data, "run")
    run = RunConfig(
        n_trials=_take(t, "run", "n_trials", int, 100),
        n_iters=_take(t, "run", "n_iters", int, None),
        seed=_take(t, "run", "seed", int, 0),
        output=_take(t, "run", "output", str, None),
        thin=_take(t, "run", "thin", int, 1),
        workers=_take(t, "run", "workers", int, None) or _default_workers(),
        raw_dump=_take(t, "run", "raw_dump", bool, False),
        init=_take(t, "run", "init", str, "standard"),
        init_mean=_take(t, "run", "init_mean", list, None),
        init_cov=_take(t, "run", "init_cov", list, None),
        init_scale=_take(t, "run", "init_scale", float, 10.0),
    )
    _no_leftovers(t, "run")
    _validate_run(run)
    return run


def _parse_theory(data: Mapping[str, Any]) -> TheoryConfig:
    t = _section(data, "theory")
    cfg = TheoryConfig(
        m_f=_take(t, "theory", "m_f", float, None),
        tau_f=_take(t, "theory", "tau_f", float, None),
        kappa=_take(t, "theory", "kappa", float, None),
        rho=_take(t, "theory", "rho", float, None),
        mc_samples=_take(t, "theory", "mc_samples", int, 100_000),
    )
    _no_leftovers(t, "theory")
    if cfg.kappa is not None and cfg.kappa <= 1:
        raise ConfigError("theory.kappa", "must exceed 1")
    if cfg.tau_f is not None and cfg.tau_f < 1:
        raise ConfigError("theory.tau_f", "must be at least 1")
    if cfg.mc_samples < 10_000:
        raise ConfigError("theory.mc_samples", "must be at least 10000")
    return cfg


def config_from_dict(data: Mapping[str, Any], source: Optional[str] = None) -> ExperimentConfig:
    """Validate a parsed TOML document."""
    known = {"problem", "topology", "algorithm", "run", "compare", "theory", "sweep"}
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown section")
    problem = _parse_problem(data)
    topology = _parse_topology(data)
    alg_table = _section(data, "algorithm")
    algorithm = _parse_algorithm(alg_table, "algorithm")

    compare: List[AlgorithmConfig] = []
    cmp_table = _section(data, "compare")
    names = _take(cmp_table, "compare", "algorithms", list, [])
    _no_leftovers(cmp_table, "compare")
    for name in names:
        if name not in ALGORITHMS:
            raise ConfigError("compare.algorithms", f"unknown algorithm {name!r}")
        sub = alg_table.get(name, {})
        if not isinstance(sub, Mapping):
            raise ConfigError(f"algorithm.{name}", "must be a table")
        entry = dict(sub)
        entry.setdefault("name", name)
        entry.setdefault("use_published_defaults", algorithm.use_published_defaults)
        compare.append(_parse_algorithm(entry, f"algorithm.{name}"))

    sweep = _section(data, "sweep")
    rhos = _take(sweep, "sweep", "rho", list, [])
    _no_leftovers(sweep, "sweep")
    rhos = [float(r) for r in rhos]
    if any(r <= 0 for r in rhos):
        raise ConfigError("sweep.rho", "all values must be positive")

    return ExperimentConfig(
        problem=problem,
        topology=topology,
        algorithm=algorithm,
        run=_parse_run(data),
        compare=compare,
        theory=_parse_theory(data),
        sweep_rho=rhos,
        source=source,
    )


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a TOML experiment file.

    Raises:
        ConfigError: On syntax errors or schema violations.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(str(path), "file not found")
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(str(path), f"invalid TOML ({err})")
    logger.debug("Loaded configuration from %s", path)
    return config_from_dict(data, source=str(path))
