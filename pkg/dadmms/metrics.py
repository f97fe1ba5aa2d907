"""
Gaussian summaries of trial ensembles, the closed-form 2-Wasserstein
distance between Gaussians, and accuracy statistics.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .problems import GaussianPosterior, LogRegProblem, predict_accuracy

logger = logging.getLogger(__name__)

PSD_TOL = 1e-10
SERIES_COLUMNS = ("iteration", "metric_name", "agent_or_avg", "value")


class MetricError(ValueError):
    """Ensemble too small, empty dataset or covariance not PSD."""


@dataclass
class GaussianSummary:
    """Mean and covariance; the covariance is symmetrized on construction."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (self.mean.shape[0],) * 2:
            raise MetricError("Covariance shape does not match the mean.")
        self.covariance = 0.5 * (cov + cov.T)

    @classmethod
    def from_posterior(cls, posterior: GaussianPosterior) -> "GaussianSummary":
        return cls(posterior.mean, posterior.covariance)


def empirical_gaussian(samples: np.ndarray) -> GaussianSummary:
    """
    Sample mean and 1/(M-1) sample covariance of an ensemble.

    Args:
        samples (ndarray): Shape (M, d), one row per trial.

    Returns:
        GaussianSummary

    Example:
        >>> s = empirical_gaussian(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        >>> s.covariance
        array([[2., 0.],
               [0., 0.]])
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    m = samples.shape[0]
    if m < 2:
        raise MetricError(f"Need at least 2 samples, got {m}.")
    mean = samples.mean(axis=0)
    centred = samples - mean
    cov = centred.T @ centred / (m - 1)
    return GaussianSummary(mean, _clamp_psd(0.5 * (cov + cov.T)))


def _clamp_psd(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = linalg.eigh(matrix)
    scale = max(1.0, float(np.max(np.abs(vals))) if vals.size else 1.0)
    if vals.size and vals[0] < -PSD_TOL * scale:
        raise MetricError(f"Matrix is not PSD (smallest eigenvalue {vals[0]:.3e}).")
    if vals.size and vals[0] < -1e-12:
        logger.warning("Clamping negative eigenvalue %.3e to zero", vals[0])
    if vals.size and vals[0] >= 0:
        return matrix
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root through eigh, eigenvalues clamped at 0."""
    sym = 0.5 * (np.asarray(matrix, dtype=float) + np.asarray(matrix, dtype=float).T)
    vals, vecs = linalg.eigh(sym)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals[0] < -PSD_TOL * scale:
        raise MetricError(f"Matrix square root of a non-PSD matrix (eigenvalue {vals[0]:.3e}).")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def wasserstein2_gaussian(a: GaussianSummary, b: GaussianSummary) -> float:
    """
    W_2 between N(m_a, S_a) and N(m_b, S_b).

    W^2 = |m_a - m_b|^2 + tr(S_a + S_b - 2 (S_b^{1/2} S_a S_b^{1/2})^{1/2}),
    with the trace term clamped at 0.

    Example:
        >>> a = GaussianSummary(np.zeros(2), np.eye(2))
        >>> b = GaussianSummary(np.array([3.0, 4.0]), np.eye(2))
        >>> round(wasserstein2_gaussian(a, b), 12)
        5.0
    """
    if a.mean.shape != b.mean.shape:
        raise MetricError("Gaussians have different dimensions.")
    root_b = sqrtm_psd(b.covariance)
    cross = sqrtm_psd(root_b @ a.covariance @ root_b)
    trace_term = float(np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.trace(cross))
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    return float(np.sqrt(mean_term + max(trace_term, 0.0)))


def average_iterate(x: np.ndarray) -> np.ndarray:
    """Mean over agents of an (N, d) iterate, or over axis -2 of a stack of them."""
    x = np.asarray(x, dtype=float)
    if x.shape[-2] < 1:
        raise MetricError("No agents to average.")
    return x.mean(axis=-2)


@dataclass
class ConvergenceSeries:
    """
    Long-format metric records.

    Each record is (iteration, metric_name, agent_or_avg, value), where
    agent_or_avg is an agent index as a string or ``"avg"``.
    """

    records: List[Tuple[int, str, str, float]] = field(default_factory=list)

    def add(self, iteration: int, metric: str, who: Union[int, str], value: float):
        if metric.startswith("w2") and value < 0:
            raise MetricError("Distances must be non-negative.")
        self.records.append((int(iteration), metric, str(who), float(value)))

    def extend(self, other: "ConvergenceSeries") -> "ConvergenceSeries":
        self.records.extend(other.records)
        return self

    def select(self, metric: str, who: Union[int, str]) -> Tuple[np.ndarray, np.ndarray]:
        """(iterations, values) of one metric/agent column."""
        rows = [(k, v) for k, m, w, v in self.records if m == metric and w == str(who)]
        if not rows:
            return np.array([], dtype=int), np.array([])
        ks, vs = zip(*rows)
        return np.array(ks), np.array(vs)

    def final(self, metric: str, who: Union[int, str]) -> float:
        ks, vs = self.select(metric, who)
        if not ks.size:
            raise KeyError(f"No records for {metric}/{who}.")
        return float(vs[np.argmax(ks)])

    def metrics(self) -> List[str]:
        return sorted({m for _, m, _, _ in self.records})

    def relabel(self, prefix: str) -> "ConvergenceSeries":
        return ConvergenceSeries([(k, f"{prefix}{m}", w, v) for k, m, w, v in self.records])

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_series_csv(self, path)


def wasserstein_series(
    histories: Sequence[np.ndarray],
    iterations: Sequence[int],
    target: GaussianSummary,
    agents: Optional[Iterable[int]] = None,
) -> ConvergenceSeries:
    """
    W_2 to the target per recorded iteration, for each agent and for the average iterate.

    Args:
        histories: One (K, N, d) iterate array per trial, all on the same iteration grid.
        iterations: The K recorded iteration indices.
        target (GaussianSummary): Reference distribution.
        agents: Agents to report; all agents by default.

    Returns:
        ConvergenceSeries: ``w2`` records per agent and for ``avg``.
    """
    stack = np.stack([np.asarray(h, dtype=float) for h in histories])  # (M, K, N, d)
    if stack.shape[0] < 2:
        raise MetricError("Need at least 2 trials.")
    agent_ids = range(stack.shape[2]) if agents is None else list(agents)
    series = ConvergenceSeries()
    averages = average_iterate(stack)  # (M, K, d)
    for t, k in enumerate(iterations):
        for i in agent_ids:
            series.add(k, "w2", i, wasserstein2_gaussian(empirical_gaussian(stack[:, t, i]), target))
        series.add(k, "w2", "avg", wasserstein2_gaussian(empirical_gaussian(averages[:, t]), target))
    return series


def accuracy_series(
    histories: Sequence[np.ndarray],
    iterations: Sequence[int],
    problem: LogRegProblem,
    features: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
) -> ConvergenceSeries:
    """
    Mean and standard deviation (1/(M-1)) over trials of each agent's prediction accuracy.

    Accuracy is evaluated on the pooled dataset unless ``features``/``labels`` are given.
    """
    if not isinstance(problem, LogRegProblem):
        raise MetricError("accuracy_series needs a logistic regression problem.")
    if features is None:
        features, labels = problem.pooled()
    if np.shape(features)[0] == 0:
        raise MetricError("Dataset is empty.")
    stack = np.stack([np.asarray(h, dtype=float) for h in histories])
    if stack.shape[0] < 2:
        raise MetricError("Need at least 2 trials.")
    series = ConvergenceSeries()
    for t, k in enumerate(iterations):
        for i in range(stack.shape[2]):
            acc = np.array([predict_accuracy(stack[m, t, i], features, labels) for m in range(stack.shape[0])])
            series.add(k, "accuracy_mean", i, float(acc.mean()))
            series.add(k, "accuracy_std", i, float(acc.std(ddof=1)))
    return series


def write_series_csv(series: ConvergenceSeries, path: Union[str, Path]) -> Path:
    """CSV with the fixed column order; floats are written with repr precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SERIES_COLUMNS)
        for k, metric, who, value in series.records:
            writer.writerow([k, metric, who, repr(value)])
    return path


def read_series_csv(path: Union[str, Path]) -> ConvergenceSeries:
    series = ConvergenceSeries()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            series.records.append((int(row["iteration"]), row["metric_name"], row["agent_or_avg"], float(row["value"])))
    return series


def summarize_final(series: ConvergenceSeries) -> Dict[str, float]:
    """Last recorded value of every (metric, agent_or_avg) column."""
    out: Dict[str, float] = {}
    for metric in series.metrics():
        whos = sorted({w for _, m, w, _ in series.records if m == metric})
        for who in whos:
            out[f"{metric}[{who}]"] = series.final(metric, who)
    return out
