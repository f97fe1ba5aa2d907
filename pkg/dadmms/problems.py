"""
Synthetic Bayesian regression problems and the per-agent potentials f_i.

Each agent holds a potential with value, gradient, Hessian and proximal
oracles. The target density of a problem is proportional to exp(-sum_i f_i).
"""

import csv
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.special import expit

from .streams import stream

logger = logging.getLogger(__name__)

Number = Union[int, float]

NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 100
LOGREG_FEATURE_VARIANCE = 20.0


class ProxConvergenceError(RuntimeError):
    """Damped Newton did not reach the gradient tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def newton_minimize(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> Tuple[np.ndarray, int]:
    """
    Damped Newton minimization of a smooth strongly convex function.

    The step is halved until the objective decreases. When 60 halvings do not
    produce a decrease the iterate sits at round-off level and the full step
    is kept.

    Args:
        objective, gradient, hessian: Oracles of the function to minimize.
        x0 (ndarray): Starting point.
        tol (float): Stop once the gradient norm is at most ``tol``.
        max_iter (int): Maximum number of Newton steps.

    Returns:
        tuple: (minimizer, number of Newton steps taken).

    Raises:
        ProxConvergenceError: If ``max_iter`` steps do not reach ``tol``.
    """
    x = np.array(x0, dtype=float)
    g = gradient(x)
    fx = objective(x)
    for it in range(max_iter):
        if np.linalg.norm(g) <= tol:
            return x, it
        step = linalg.solve(hessian(x), g, assume_a="pos")
        t = 1.0
        for _ in range(60):
            candidate = x - t * step
            f_candidate = objective(candidate)
            if f_candidate < fx:
                break
            t *= 0.5
        else:
            candidate = x - step
            f_candidate = objective(candidate)
        x, fx = candidate, f_candidate
        g = gradient(x)
    residual = float(np.linalg.norm(g))
    if residual <= tol:
        return x, max_iter
    raise ProxConvergenceError(
        f"Newton solver did not converge in {max_iter} iterations (gradient norm {residual:.3e}).",
        residual=residual,
        iterations=max_iter,
    )


class LocalPotential(ABC):
    """
    One agent's potential f_i.

    Subclasses provide value/grad/hess and the two minimization oracles:

    - ``prox(gamma, v)`` = argmin_x f(x) + |x - v|^2 / (2 gamma)
    - ``minimize_regularized(curvature, linear)`` = argmin_x f(x) + curvature/2 |x|^2 + linear^T x
    """

    dim: int

    @abstractmethod
    def value(self, x: np.ndarray) -> float:
        ...

    @abstractmethod
    def grad(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def hess(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def prox(self, gamma: float, v: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def minimize_regularized(self, curvature: float, linear: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def curvature_bounds(self) -> Tuple[float, float]:
        """(m_{f_i}, M_{f_i}): strong convexity and gradient Lipschitz constants."""

    def prox_residual(self, gamma: float, v: np.ndarray, x: np.ndarray) -> float:
        """|grad f(x) + (x - v) / gamma|, zero at the exact prox point."""
        return float(np.linalg.norm(self.grad(x) + (x - v) / gamma))


class QuadraticPotential(LocalPotential):
    """f(x) = 1/2 x^T H x - b^T x + c with H symmetric positive definite."""

    def __init__(self, hessian: np.ndarray, linear: np.ndarray, constant: float = 0.0):
        self.H = np.asarray(hessian, dtype=float)
        self.b = np.asarray(linear, dtype=float)
        self.c = float(constant)
        self.dim = self.b.shape[0]
        self._eye = np.eye(self.dim)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x - self.b @ x + self.c)

    def grad(self, x):
        return self.H @ np.asarray(x, dtype=float) - self.b

    def hess(self, x):
        return self.H.copy()

    def prox(self, gamma, v):
        if gamma <= 0:
            raise ValueError("gamma must be positive.")
        rhs = self.b + np.asarray(v, dtype=float) / gamma
        return linalg.solve(self.H + self._eye / gamma, rhs, assume_a="pos")

    def minimize_regularized(self, curvature, linear):
        return linalg.solve(self.H + curvature * self._eye, self.b - linear, assume_a="pos")

    def curvature_bounds(self):
        eig = linalg.eigvalsh(self.H)
        return float(eig[0]), float(eig[-1])


class LogisticPotential(LocalPotential):
    """
    f(x) = sum_l log(1 + exp(psi_l x^T z_l)) + ridge/2 |x|^2.

    psi_l = -1 for label-1 points and +1 otherwise.
    """

    def __init__(self, features: np.ndarray, psi: np.ndarray, ridge: float):
        self.Z = np.asarray(features, dtype=float).reshape(-1, np.shape(features)[-1])
        self.psi = np.asarray(psi, dtype=float)
        self.ridge = float(ridge)
        self.dim = self.Z.shape[1]
        self._signed = self.Z * self.psi[:, None]

    def value(self, x):
        t = self._signed @ np.asarray(x, dtype=float)
        return float(np.logaddexp(0.0, t).sum() + 0.5 * self.ridge * (x @ x))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        t = self._signed @ x
        return self._signed.T @ expit(t) + self.ridge * x

    def hess(self, x):
        t = self._signed @ np.asarray(x, dtype=float)
        s = expit(t)
        weights = s * (1.0 - s)
        return (self.Z.T * weights) @ self.Z + self.ridge * np.eye(self.dim)

    def _minimize(self, curvature, linear, x0):
        linear = np.asarray(linear, dtype=float)

        def phi(x):
            return self.value(x) + 0.5 * curvature * (x @ x) + linear @ x

        def dphi(x):
            return self.grad(x) + curvature * x + linear

        def d2phi(x):
            return self.hess(x) + curvature * np.eye(self.dim)

        x, iters = newton_minimize(phi, dphi, d2phi, x0)
        if iters > 20:
            logger.debug("Newton needed %d iterations", iters)
        return x

    def prox(self, gamma, v):
        if gamma <= 0:
            raise ValueError("gamma must be positive.")
        v = np.asarray(v, dtype=float)
        # |x - v|^2 / (2 gamma) = |x|^2 / (2 gamma) - v^T x / gamma + const
        return self._minimize(1.0 / gamma, -v / gamma, v)

    def minimize_regularized(self, curvature, linear):
        return self._minimize(curvature, linear, np.zeros(self.dim))

    def curvature_bounds(self):
        if self.Z.shape[0] == 0:
            return self.ridge, self.ridge
        top = linalg.eigvalsh(self.Z.T @ self.Z)[-1]
        return self.ridge, float(0.25 * top + self.ridge)


@dataclass
class GaussianPosterior:
    """Closed-form Gaussian posterior N(mean, covariance)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        self.covariance = 0.5 * (cov + cov.T)
        linalg.cholesky(self.covariance, lower=True)


@dataclass
class LinRegProblem:
    """
    Distributed Bayesian linear regression.

    f_i(x) = 1/(2 xi^2) sum_l (y_i^l - x^T z_i^l)^2 + |x|^2 / (2 lambda N).
    """

    d: int
    xi: float
    lambda_prior: float
    features: List[np.ndarray]
    targets: List[np.ndarray]
    x_true: Optional[np.ndarray] = None
    kind: str = field(default="linreg", init=False)
    _potentials: Optional[List[QuadraticPotential]] = field(default=None, init=False, repr=False)

    @property
    def n_agents(self) -> int:
        return len(self.features)

    def pooled(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.vstack(self.features), np.concatenate(self.targets)

    def potentials(self) -> List[QuadraticPotential]:
        if self.xi <= 0:
            raise ValueError("Potentials need xi > 0; xi = 0 data is only usable as an oracle.")
        if self._potentials is None:
            ridge = 1.0 / (self.lambda_prior * self.n_agents)
            inv_var = 1.0 / self.xi ** 2
            self._potentials = [
                QuadraticPotential(
                    inv_var * (z.T @ z) + ridge * np.eye(self.d),
                    inv_var * (z.T @ y),
                    0.5 * inv_var * float(y @ y),
                )
                for z, y in zip(self.features, self.targets)
            ]
        return self._potentials


@dataclass
class LogRegProblem:
    """
    Distributed Bayesian logistic regression; within each agent label-1 points come first.

    f_i(x) = sum_l log(1 + exp(psi_l x^T z_i^l)) + |x|^2 / (2 lambda N).
    """

    d: int
    lambda_prior: float
    features: List[np.ndarray]
    labels: List[np.ndarray]
    x_true: Optional[np.ndarray] = None
    kind: str = field(default="logreg", init=False)
    _potentials: Optional[List[LogisticPotential]] = field(default=None, init=False, repr=False)

    @property
    def n_agents(self) -> int:
        return len(self.features)

    def n_label_one(self, i: int) -> int:
        return int(np.sum(self.labels[i] == 1))

    def pooled(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.vstack(self.features), np.concatenate(self.labels)

    def potentials(self) -> List[LogisticPotential]:
        if self._potentials is None:
            ridge = 1.0 / (self.lambda_prior * self.n_agents)
            self._potentials = [
                LogisticPotential(z, np.where(y == 1, -1.0, 1.0), ridge)
                for z, y in zip(self.features, self.labels)
            ]
        return self._potentials


Problem = Union[LinRegProblem, LogRegProblem]


def _per_agent_sizes(n_agents: int, n_per_agent: Union[int, Sequence[int]]) -> List[int]:
    if np.ndim(n_per_agent) == 0:
        sizes = [int(n_per_agent)] * n_agents
    else:
        sizes = [int(n) for n in n_per_agent]
    if n_agents < 1 or len(sizes) != n_agents or any(n < 0 for n in sizes):
        raise ValueError("Need n_agents >= 1 and one non-negative sample count per agent.")
    return sizes


def generate_linreg(
    d: int,
    xi: Number,
    lambda_prior: Number,
    n_agents: int,
    n_per_agent: Union[int, Sequence[int]],
    seed: int,
) -> LinRegProblem:
    """
    Draw x ~ N(0, lambda I) once, then per agent z ~ N(0, I), y = x^T z + xi * N(0, 1).

    Example:
        >>> p = generate_linreg(2, 4.0, 10.0, 5, 50, seed=0)
        >>> p.n_agents, p.features[0].shape
        (5, (50, 2))
    """
    if d < 1 or xi < 0 or lambda_prior <= 0:
        raise ValueError("Need d >= 1, xi >= 0 and lambda_prior > 0.")
    sizes = _per_agent_sizes(n_agents, n_per_agent)
    rng = stream(seed, "dataset")
    x_true = np.sqrt(lambda_prior) * rng.standard_normal(d)
    features, targets = [], []
    for n in sizes:
        z = rng.standard_normal((n, d))
        noise = rng.standard_normal(n)
        features.append(z)
        targets.append(z @ x_true + xi * noise)
    logger.info("Generated linreg dataset: N=%d, n_i=%s, d=%d", n_agents, sizes[0], d)
    return LinRegProblem(d=d, xi=float(xi), lambda_prior=float(lambda_prior),
                         features=features, targets=targets, x_true=x_true)


def generate_logreg(
    d: int,
    lambda_prior: Number,
    n_agents: int,
    n_per_agent: Union[int, Sequence[int]],
    seed: int,
    x_true: Optional[np.ndarray] = None,
    feature_variance: float = LOGREG_FEATURE_VARIANCE,
) -> LogRegProblem:
    """
    Draw x ~ N(0, lambda I) (unless given), z ~ N(0, 20 I), p ~ U(0, 1) and
    label 1 iff p <= sigmoid(x^T z). Label-1 points are moved to the front of
    each agent's data, preserving their relative order.
    """
    if d < 1 or lambda_prior <= 0:
        raise ValueError("Need d >= 1 and lambda_prior > 0.")
    sizes = _per_agent_sizes(n_agents, n_per_agent)
    rng = stream(seed, "dataset")
    drawn = np.sqrt(lambda_prior) * rng.standard_normal(d)
    x = drawn if x_true is None else np.asarray(x_true, dtype=float)
    features, labels = [], []
    for n in sizes:
        z = np.sqrt(feature_variance) * rng.standard_normal((n, d))
        p = rng.uniform(0.0, 1.0, size=n)
        y = (p <= expit(z @ x)).astype(np.int64)
        order = np.argsort(-y, kind="stable")
        features.append(z[order])
        labels.append(y[order])
    logger.info("Generated logreg dataset: N=%d, n_i=%s, d=%d", n_agents, sizes[0], d)
    return LogRegProblem(d=d, lambda_prior=float(lambda_prior),
                         features=features, labels=labels, x_true=x)


def linreg_prox(potential: QuadraticPotential, gamma: float, v: np.ndarray) -> np.ndarray:
    """(H + I/gamma)^{-1} (b + v/gamma)."""
    if not isinstance(potential, QuadraticPotential):
        raise TypeError("linreg_prox expects a QuadraticPotential.")
    return potential.prox(gamma, v)


def logreg_prox(potential: LogisticPotential, gamma: float, v: np.ndarray) -> np.ndarray:
    """Damped Newton on f(x) + |x - v|^2 / (2 gamma), warm-started at v."""
    if not isinstance(potential, LogisticPotential):
        raise TypeError("logreg_prox expects a LogisticPotential.")
    return potential.prox(gamma, v)


def linreg_true_posterior(problem: LinRegProblem) -> GaussianPosterior:
    """
    Conjugate posterior of the pooled linear regression.

    precision = I / lambda + Z^T Z / xi^2, mean = covariance Z^T y / xi^2.
    """
    if problem.xi <= 0:
        raise ValueError("The closed-form posterior needs xi > 0.")
    z, y = problem.pooled()
    precision = np.eye(problem.d) / problem.lambda_prior
    shift = np.zeros(problem.d)
    if z.shape[0]:
        precision = precision + (z.T @ z) / problem.xi ** 2
        shift = (z.T @ y) / problem.xi ** 2
    factor = linalg.cho_factor(precision, lower=True)
    covariance = linalg.cho_solve(factor, np.eye(problem.d))
    mean = linalg.cho_solve(factor, shift)
    return GaussianPosterior(mean=mean, covariance=covariance)


def pooled_minimizer(problem: Problem) -> np.ndarray:
    """Centralized argmin of sum_i f_i (the MAP point)."""
    pots = problem.potentials()
    if isinstance(problem, LinRegProblem):
        h = sum(p.H for p in pots)
        b = sum(p.b for p in pots)
        return linalg.solve(h, b, assume_a="pos")
    x, _ = newton_minimize(
        lambda x: sum(p.value(x) for p in pots),
        lambda x: sum(p.grad(x) for p in pots),
        lambda x: sum(p.hess(x) for p in pots),
        np.zeros(problem.d),
    )
    return x


def predict_accuracy(x: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
    """
    Fraction of points whose predicted label matches the true label.

    Label 1 is assigned when sigmoid(x^T z) >= 0.5, i.e. x^T z >= 0.
    """
    features = np.asarray(features, dtype=float)
    if features.shape[0] == 0:
        raise ValueError("Dataset is empty.")
    predicted = (features @ np.asarray(x, dtype=float) >= 0.0).astype(np.int64)
    return float(np.mean(predicted == np.asarray(labels)))


def strong_convexity_constants(problem: Problem) -> Tuple[float, float, float]:
    """
    (m_f, M_f, tau_f) with m_f = min_i m_{f_i} and M_f = max_i M_{f_i}.

    Linear regression uses the exact Hessian spectra; logistic regression uses
    the ridge term for m_{f_i} and 1/4 lambda_max(sum z z^T) + ridge for M_{f_i}.
    """
    bounds = [p.curvature_bounds() for p in problem.potentials()]
    m_f = min(b[0] for b in bounds)
    big_m = max(b[1] for b in bounds)
    return m_f, big_m, big_m / m_f


def write_dataset(problem: Problem, path: Union[str, Path]) -> Path:
    """Flat CSV, one row per point: agent, z0..z{d-1}, y."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ys = problem.targets if isinstance(problem, LinRegProblem) else problem.labels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent"] + [f"z{k}" for k in range(problem.d)] + ["y"])
        for agent, (z, y) in enumerate(zip(problem.features, ys)):
            for row, target in zip(z, y):
                writer.writerow([agent] + [repr(float(v)) for v in row] + [repr(float(target))])
    return path


def read_dataset(
    path: Union[str, Path],
    kind: str,
    lambda_prior: float,
    xi: Optional[float] = None,
    n_agents: Optional[int] = None,
) -> Problem:
    """Inverse of ``write_dataset``; the generating x_true is not stored."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 2
        for rec in reader:
            rows.append((int(rec[0]), [float(v) for v in rec[1:-1]], float(rec[-1])))
    count = n_agents if n_agents is not None else 1 + max((r[0] for r in rows), default=-1)
    features = [np.array([r[1] for r in rows if r[0] == i], dtype=float).reshape(-1, d) for i in range(count)]
    ys = [np.array([r[2] for r in rows if r[0] == i], dtype=float) for i in range(count)]
    if kind == "linreg":
        if xi is None:
            raise ValueError("xi is required to rebuild a linreg problem.")
        return LinRegProblem(d=d, xi=xi, lambda_prior=lambda_prior, features=features, targets=ys)
    if kind == "logreg":
        return LogRegProblem(d=d, lambda_prior=lambda_prior, features=features,
                             labels=[y.astype(np.int64) for y in ys])
    raise ValueError(f"Unknown problem kind: {kind!r}")
