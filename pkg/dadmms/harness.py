"""
Seeded multi-trial experiment runner, result persistence and run manifests.
"""

import concurrent.futures
import csv
import json
import logging
import platform
import re
import unicodedata
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pytz
import scipy
from dateutil import parser as date_parser
from tqdm import tqdm

from .config import AlgorithmConfig, ExperimentConfig
from .graph import Topology
from .metrics import ConvergenceSeries, GaussianSummary, accuracy_series, wasserstein_series, write_series_csv
from .problems import LinRegProblem, Problem, ProxConvergenceError, linreg_true_posterior, write_dataset
from .samplers import ChainHistory, InitDistribution, make_init, run_chain
from .streams import derive_seed

logger = logging.getLogger(__name__)

SOFTWARE_VERSION = "0.1.0"
RAW_COLUMNS = ("trial", "iteration", "agent", "component", "value")


def slugify(text: str, separator: str = "-") -> str:
    """
    Filesystem-safe run name.

    Example:
        >>> slugify("linreg ring_cyclic N=5 dadmms")
        'linreg-ring_cyclic-n5-dadmms'
    """
    text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode("ascii")
    text = re.sub(r"[^\w\s-]", "", text.lower())
    text = re.sub(r"[-\s]+", separator, text)
    return text.strip(separator)


def run_slug(cfg: ExperimentConfig, label: Optional[str] = None) -> str:
    name = label or cfg.algorithm.name
    return slugify(f"{cfg.problem.kind} {cfg.topology.kind} N={cfg.topology.n_agents} {name}")


def utc_now() -> datetime:
    return datetime.now(pytz.utc)


@dataclass
class RunManifest:
    """
    Everything needed to reproduce a run: config echo, seeds, versions and outputs.
    """

    config: Dict[str, Any]
    root_seed: int
    trial_seeds: List[int]
    algorithms: List[str]
    software_version: str = SOFTWARE_VERSION
    numpy_version: str = np.__version__
    scipy_version: str = scipy.__version__
    python_version: str = platform.python_version()
    started: Optional[datetime] = None
    finished: Optional[datetime] = None
    failures: List[Dict[str, Any]] = field(default_factory=list)
    outputs: Dict[str, str] = field(default_factory=dict)

    @property
    def wall_clock_seconds(self) -> Optional[float]:
        if self.started is None or self.finished is None:
            return None
        return (self.finished - self.started).total_seconds()

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["started"] = self.started.isoformat() if self.started else None
        data["finished"] = self.finished.isoformat() if self.finished else None
        data["wall_clock_seconds"] = self.wall_clock_seconds
        return data

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        data.pop("wall_clock_seconds", None)
        for key in ("started", "finished"):
            if data.get(key):
                data[key] = date_parser.isoparse(data[key])
        return cls(**data)

    def same_run(self, other: "RunManifest") -> bool:
        """True when both manifests describe the same config, seeds and software."""
        return (
            self.config == other.config
            and self.trial_seeds == other.trial_seeds
            and self.software_version == other.software_version
        )


@dataclass
class ExperimentResult:
    series: ConvergenceSeries
    manifest: RunManifest
    histories: Dict[str, List[ChainHistory]]
    problem: Problem
    topology: Topology
    output_dir: Optional[Path] = None


def trial_seeds(root_seed: int, n_trials: int) -> List[int]:
    """Per-trial seeds derived from (root seed, trial index) only."""
    return [derive_seed(root_seed, "trial", t) for t in range(n_trials)]


def build_init(cfg: ExperimentConfig) -> InitDistribution:
    run = cfg.run
    cov = None if run.init_cov is None else np.asarray(run.init_cov, dtype=float)
    return make_init(run.init, cfg.problem.d, run.seed, run.init_mean, cov, run.init_scale)


def _run_trials(
    cfg: ExperimentConfig,
    algorithm: AlgorithmConfig,
    problem: Problem,
    topo: Topology,
    init: InitDistribution,
    seeds: Sequence[int],
    progress: bool,
) -> Tuple[List[Tuple[int, ChainHistory]], List[Dict[str, Any]]]:
    hyper = cfg.hyper(algorithm)
    # potentials are built lazily; build them once before threads share the problem
    problem.potentials()

    def one(trial: int) -> ChainHistory:
        logger.debug("trial %d seed %d", trial, seeds[trial])
        return run_chain(
            algorithm.name, problem, topo, hyper, cfg.n_iters, seeds[trial], thin=cfg.run.thin, init=init
        )

    done: Dict[int, ChainHistory] = {}
    failures: List[Dict[str, Any]] = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.run.workers) as executor:
        future_to_trial = {executor.submit(one, t): t for t in range(len(seeds))}
        bar = tqdm(total=len(seeds), desc=algorithm.name, disable=not progress, leave=False)
        for future in concurrent.futures.as_completed(future_to_trial):
            trial = future_to_trial[future]
            try:
                done[trial] = future.result()
            except (ProxConvergenceError, FloatingPointError) as err:
                logger.warning("%s trial %d failed: %s", algorithm.name, trial, err)
                failures.append(
                    {"algorithm": algorithm.name, "trial": trial, "error": type(err).__name__, "message": str(err)}
                )
            bar.update(1)
        bar.close()
    failures.sort(key=lambda f: f["trial"])
    if len(done) < 2:
        raise RuntimeError(f"{algorithm.name}: only {len(done)} of {len(seeds)} trials completed.")
    return sorted(done.items()), failures


def target_summary(problem: Problem) -> Optional[GaussianSummary]:
    if isinstance(problem, LinRegProblem):
        return GaussianSummary.from_posterior(linreg_true_posterior(problem))
    return None


def series_for(problem: Problem, runs: Sequence[Tuple[int, ChainHistory]]) -> ConvergenceSeries:
    """Wasserstein series for linreg, accuracy series for logreg."""
    iterations = runs[0][1].iterations
    stacks = [h.x for _, h in runs]
    target = target_summary(problem)
    if target is not None:
        return wasserstein_series(stacks, iterations, target)
    return accuracy_series(stacks, iterations, problem)


def write_raw(path: Union[str, Path], runs: Sequence[Tuple[int, ChainHistory]]) -> Path:
    """Per-iterate dump: trial, iteration, agent, component, value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_COLUMNS)
        for trial, history in runs:
            for row in history.records(trial):
                writer.writerow(list(row[:4]) + [repr(row[4])])
    return path


def _config_echo(cfg: ExperimentConfig) -> Dict[str, Any]:
    data = asdict(cfg)
    data["n_iters_effective"] = cfg.n_iters
    return json.loads(json.dumps(data, default=str))


def _output_dir(cfg: ExperimentConfig, label: Optional[str]) -> Path:
    return Path(cfg.run.output) if cfg.run.output else Path("runs") / run_slug(cfg, label)


def _execute(
    cfg: ExperimentConfig,
    algorithms: Sequence[AlgorithmConfig],
    labels: Sequence[str],
    write: bool,
    progress: bool,
    slug_label: Optional[str] = None,
    always_prefix: bool = False,
    inits: Optional[Sequence[InitDistribution]] = None,
) -> ExperimentResult:
    started = utc_now()
    topo = cfg.topology.build()
    problem = cfg.problem.build(topo.n_agents)
    if inits is None:
        inits = [build_init(cfg)] * len(algorithms)
    seeds = trial_seeds(cfg.run.seed, cfg.run.n_trials)
    manifest = RunManifest(
        config=_config_echo(cfg),
        root_seed=cfg.run.seed,
        trial_seeds=seeds,
        algorithms=list(labels),
        started=started,
    )
    logger.info(
        "Starting %s on %s (N=%d), %d trials x %d iterations",
        ", ".join(labels), topo.kind, topo.n_agents, cfg.run.n_trials, cfg.n_iters,
    )
    merged = ConvergenceSeries()
    histories: Dict[str, List[ChainHistory]] = {}
    all_runs: Dict[str, List[Tuple[int, ChainHistory]]] = {}
    for alg, label, init in zip(algorithms, labels, inits):
        runs, failures = _run_trials(cfg, alg, problem, topo, init, seeds, progress)
        manifest.failures.extend(failures)
        series = series_for(problem, runs)
        merged.extend(series.relabel(f"{label}/") if always_prefix or len(algorithms) > 1 else series)
        histories[label] = [h for _, h in runs]
        all_runs[label] = runs
        logger.info("%s finished: %d trials kept", label, len(runs))
    manifest.finished = utc_now()

    out_dir = None
    if write:
        out_dir = _output_dir(cfg, slug_label)
        manifest.outputs["series"] = str(write_series_csv(merged, out_dir / "series.csv"))
        manifest.outputs["dataset"] = str(write_dataset(problem, out_dir / "dataset.csv"))
        if cfg.run.raw_dump:
            for label, runs in all_runs.items():
                name = "raw.csv" if len(all_runs) == 1 else f"raw_{slugify(label)}.csv"
                manifest.outputs[f"raw/{label}"] = str(write_raw(out_dir / name, runs))
        manifest_path = out_dir / "manifest.json"
        manifest.outputs["manifest"] = str(manifest_path)
        manifest.save(manifest_path)
        logger.info("Wrote results to %s", out_dir)
    return ExperimentResult(merged, manifest, histories, problem, topo, out_dir)


def run_experiment(cfg: ExperimentConfig, write: bool = True, progress: bool = False) -> ExperimentResult:
    """
    Run ``cfg.run.n_trials`` chains of the configured algorithm on one dataset.

    Trials run on a thread pool of ``cfg.run.workers`` workers; results are
    reduced in trial order, so outputs do not depend on the schedule.

    Args:
        cfg (ExperimentConfig): Validated configuration.
        write (bool): Write series.csv, dataset.csv, manifest.json (and raw dumps) to the output directory.
        progress (bool): Show a tqdm progress bar.

    Returns:
        ExperimentResult: Series, manifest and per-trial histories.
    """
    return _execute(cfg, [cfg.algorithm], [cfg.algorithm.name], write, progress)


def compare_algorithms(
    configs: Sequence[ExperimentConfig], write: bool = True, progress: bool = False
) -> ExperimentResult:
    """
    Run several algorithms on the same dataset, topology and trial seeds.

    Metric names in the merged series are prefixed with ``<algorithm>/``;
    a single config passes through unprefixed.

    Raises:
        ValueError: If the configs disagree on problem, topology or run settings.
    """
    if not configs:
        raise ValueError("No configurations to compare.")
    base = configs[0]
    for other in configs[1:]:
        if other.problem != base.problem or other.topology != base.topology:
            raise ValueError("Compared configurations must share problem and topology.")
        if (other.run.seed, other.run.n_trials, other.n_iters, other.run.thin) != (
            base.run.seed, base.run.n_trials, base.n_iters, base.run.thin
        ):
            raise ValueError("Compared configurations must share seed, trials, iterations and thinning.")
    algorithms = [c.algorithm for c in configs]
    labels = [a.name for a in algorithms]
    if len(set(labels)) != len(labels):
        raise ValueError("Each algorithm may appear only once in a comparison.")
    return _execute(base, algorithms, labels, write, progress, slug_label="compare")


def compare_configs(cfg: ExperimentConfig) -> List[ExperimentConfig]:
    """Expand a config's ``[compare]`` list into one config per algorithm."""
    algorithms = cfg.compare or [cfg.algorithm]
    return [replace(cfg, algorithm=alg, compare=[]) for alg in algorithms]


def sweep_rho(
    cfg: ExperimentConfig, rhos: Sequence[float], write: bool = True, progress: bool = False
) -> ExperimentResult:
    """D-ADMMS for each penalty in ``rhos`` on a shared dataset; metrics prefixed ``rho=<value>/``."""
    if not rhos:
        raise ValueError("No rho values to sweep.")
    if any(r <= 0 for r in rhos):
        raise ValueError("rho values must be positive.")
    algorithms = [AlgorithmConfig(name="dadmms", params={"rho": float(r)}) for r in rhos]
    labels = [f"rho={float(r):g}" for r in rhos]
    return _execute(cfg, algorithms, labels, write, progress, slug_label="sweep-rho", always_prefix=True)


def init_ablation(
    cfg: ExperimentConfig, n_random: int, write: bool = True, progress: bool = False
) -> ExperimentResult:
    """
    D-ADMMS started from N(0, I) and from ``n_random`` distributions N(mean, A A^T).

    Variant q >= 1 draws its A from the init stream of root seed + q; metrics
    are prefixed ``init<q>/``.
    """
    if n_random < 0:
        raise ValueError("n_random must be non-negative.")
    d = cfg.problem.d
    inits = [make_init("standard", d)] + [
        make_init("random_gaussian", d, cfg.run.seed + q, cfg.run.init_mean, scale=cfg.run.init_scale)
        for q in range(1, n_random + 1)
    ]
    dadmms = AlgorithmConfig("dadmms", dict(cfg.algorithm.params), cfg.algorithm.use_published_defaults)
    labels = [f"init{q}" for q in range(len(inits))]
    return _execute(
        cfg, [dadmms] * len(inits), labels, write, progress,
        slug_label="init-ablation", always_prefix=True, inits=inits,
    )
