"""
Iterate-generating schemes behind one synchronous-round interface.

D-ADMMS and its noiseless special case C-ADMM, plus the gradient baselines
D-SGLD, D-SGHMC and D-ULA. Agent states are stacked as (N, d) arrays; every
step reads round-k values from the incoming state and writes round-(k+1)
values into fresh buffers.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .graph import Topology, mixing_matrix
from .problems import LocalPotential, Problem
from .streams import stream

logger = logging.getLogger(__name__)

ALGORITHMS = ("dadmms", "admm", "dsgld", "dsghmc", "dula")
INIT_KINDS = ("standard", "gaussian", "random_gaussian")

SQRT2 = np.sqrt(2.0)


@dataclass
class AdmmState:
    """
    D-ADMMS / C-ADMM state at round k.

    Attributes:
        x (ndarray): Primal iterates, shape (N, d).
        p (ndarray): Dual iterates, shape (N, d); zero at k = 0.
        k (int): Iteration counter.
        rho (float): Penalty parameter.
        noise_on (bool): False turns the scheme into C-ADMM.
    """

    x: np.ndarray
    p: np.ndarray
    k: int = 0
    rho: float = 5.0
    noise_on: bool = True

    @classmethod
    def initial(cls, x0: np.ndarray, rho: float, noise_on: bool = True) -> "AdmmState":
        if rho <= 0:
            raise ValueError("rho must be positive.")
        x0 = np.array(x0, dtype=float)
        return cls(x=x0, p=np.zeros_like(x0), k=0, rho=float(rho), noise_on=noise_on)


@dataclass(frozen=True)
class AdmmHyper:
    rho: float

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive.")


@dataclass(frozen=True)
class DsgldHyper:
    eta: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive.")


@dataclass(frozen=True)
class DsghmcHyper:
    eta: float
    gamma: float

    def __post_init__(self):
        if self.eta <= 0 or self.gamma < 0:
            raise ValueError("D-SGHMC needs eta > 0 and gamma >= 0.")


@dataclass(frozen=True)
class DulaHyper:
    """Decreasing schedules alpha_k = alpha0/(offset+k)^chi2 and zeta_k = zeta0/(offset+k)^chi1."""

    alpha0: float
    zeta0: float
    chi1: float
    chi2: float
    offset: float = 230.0

    def __post_init__(self):
        if self.alpha0 <= 0 or self.zeta0 <= 0 or self.offset <= 0:
            raise ValueError("D-ULA needs alpha0, zeta0 and offset positive.")
        if self.chi1 < 0 or self.chi2 < 0:
            raise ValueError("D-ULA exponents chi1, chi2 must be non-negative.")

    def alpha(self, k: int) -> float:
        return self.alpha0 / (self.offset + k) ** self.chi2

    def zeta(self, k: int) -> float:
        return self.zeta0 / (self.offset + k) ** self.chi1


Hyper = Union[AdmmHyper, DsgldHyper, DsghmcHyper, DulaHyper]

HYPER_TYPES = {
    "dadmms": AdmmHyper,
    "admm": AdmmHyper,
    "dsgld": DsgldHyper,
    "dsghmc": DsghmcHyper,
    "dula": DulaHyper,
}


@dataclass
class LangevinState:
    """State of the gradient baselines; v stays zero except for D-SGHMC."""

    x: np.ndarray
    v: np.ndarray
    hyper: Hyper
    k: int = 0

    @classmethod
    def initial(cls, x0: np.ndarray, hyper: Hyper) -> "LangevinState":
        x0 = np.array(x0, dtype=float)
        return cls(x=x0, v=np.zeros_like(x0), hyper=hyper, k=0)


@dataclass(frozen=True)
class NoiseDraw:
    """One round of per-agent noise, shape (N, d)."""

    w: np.ndarray

    @classmethod
    def zeros(cls, n_agents: int, d: int) -> "NoiseDraw":
        return cls(np.zeros((n_agents, d)))


def draw_noise(rng: np.random.Generator, n_agents: int, d: int, scale: float = 1.0) -> NoiseDraw:
    """Standard normal draws in agent order 0..N-1, multiplied by ``scale``."""
    return NoiseDraw(scale * rng.standard_normal((n_agents, d)))


def _order(n_agents: int, order: Optional[Sequence[int]]) -> Sequence[int]:
    if order is None:
        return range(n_agents)
    if sorted(order) != list(range(n_agents)):
        raise ValueError("order must be a permutation of the agent indices.")
    return order


def _dual_phase(x_new: np.ndarray, p: np.ndarray, rho: float, topo: Topology, order) -> np.ndarray:
    p_new = np.empty_like(p)
    for i in order:
        nbrs = list(topo.neighbors(i))
        if nbrs:
            p_new[i] = p[i] + rho * np.sum(x_new[i] - x_new[nbrs], axis=0)
        else:
            p_new[i] = p[i]
    return p_new


def dadmms_step(
    state: AdmmState,
    topo: Topology,
    potentials: Sequence[LocalPotential],
    noise: Optional[NoiseDraw],
    order: Optional[Sequence[int]] = None,
) -> AdmmState:
    """
    One synchronous D-ADMMS round, proximal form.

    Primal phase, from round-k values only:
    x_i <- prox_{gamma_i f_i}(u_i) with gamma_i = 1/(2 rho N_i) and
    u_i = sum_j (x_i + x_j)/(2 N_i) - sqrt(2)/(2 rho) w_i - p_i/(2 rho N_i).
    Isolated agents solve argmin f_i(x) + p_i^T x. The dual phase then uses
    the round-(k+1) primals: p_i <- p_i + rho sum_j (x_i - x_j).

    Args:
        state (AdmmState): Round-k state.
        topo (Topology): Communication graph.
        potentials (list): One LocalPotential per agent.
        noise (NoiseDraw): Round-(k+1) noise; ignored when ``state.noise_on`` is False.
        order (sequence): Agent update order; the result does not depend on it.

    Returns:
        AdmmState: Round-(k+1) state.
    """
    rho = state.rho
    x, p = state.x, state.p
    order = _order(topo.n_agents, order)
    x_new = np.empty_like(x)
    for i in order:
        nbrs = list(topo.neighbors(i))
        n_i = len(nbrs)
        if n_i == 0:
            x_new[i] = potentials[i].minimize_regularized(0.0, p[i])
            continue
        centre = np.sum(x[i] + x[nbrs], axis=0) / (2 * n_i) - p[i] / (2 * rho * n_i)
        if state.noise_on:
            centre = centre - (SQRT2 / (2 * rho)) * noise.w[i]
        x_new[i] = potentials[i].prox(1.0 / (2 * rho * n_i), centre)
    p_new = _dual_phase(x_new, p, rho, topo, order)
    return replace(state, x=x_new, p=p_new, k=state.k + 1)


def dadmms_step_argmin(
    state: AdmmState,
    topo: Topology,
    potentials: Sequence[LocalPotential],
    noise: Optional[NoiseDraw],
) -> AdmmState:
    """
    Same round as ``dadmms_step`` through the argmin form of the primal update.

    argmin_x f_i(x) + p_i^T x + rho sum_j |x - (x_i + x_j)/2 + sqrt(2)/(2 rho) w_i|^2
    expands to curvature 2 rho N_i and linear term
    p_i - rho sum_j (x_i + x_j) + sqrt(2) N_i w_i.
    """
    rho = state.rho
    x, p = state.x, state.p
    x_new = np.empty_like(x)
    for i in range(topo.n_agents):
        nbrs = list(topo.neighbors(i))
        n_i = len(nbrs)
        linear = p[i] - rho * np.sum(x[i] + x[nbrs], axis=0) if n_i else p[i].copy()
        if state.noise_on and n_i:
            linear = linear + SQRT2 * n_i * noise.w[i]
        x_new[i] = potentials[i].minimize_regularized(2 * rho * n_i, linear)
    p_new = _dual_phase(x_new, p, rho, topo, range(topo.n_agents))
    return replace(state, x=x_new, p=p_new, k=state.k + 1)


def cadmms_step(state: AdmmState, topo: Topology, potentials: Sequence[LocalPotential]) -> AdmmState:
    """Consensus ADMM round (no noise)."""
    rho = state.rho
    x, p = state.x, state.p
    x_new = np.empty_like(x)
    for i in range(topo.n_agents):
        nbrs = list(topo.neighbors(i))
        n_i = len(nbrs)
        if n_i == 0:
            x_new[i] = potentials[i].minimize_regularized(0.0, p[i])
        else:
            centre = np.sum(x[i] + x[nbrs], axis=0) / (2 * n_i) - p[i] / (2 * rho * n_i)
            x_new[i] = potentials[i].prox(1.0 / (2 * rho * n_i), centre)
    p_new = np.empty_like(p)
    for i in range(topo.n_agents):
        nbrs = list(topo.neighbors(i))
        p_new[i] = p[i] + rho * np.sum(x_new[i] - x_new[nbrs], axis=0) if nbrs else p[i]
    return AdmmState(x=x_new, p=p_new, k=state.k + 1, rho=rho, noise_on=False)


def _gradients(x: np.ndarray, potentials: Sequence[LocalPotential]) -> np.ndarray:
    return np.stack([pot.grad(x[i]) for i, pot in enumerate(potentials)])


def dsgld_step(
    state: LangevinState,
    topo: Topology,
    potentials: Sequence[LocalPotential],
    noise: NoiseDraw,
    mixing: Optional[np.ndarray] = None,
) -> LangevinState:
    """x_i <- sum_j S_ij x_j - eta grad f_i(x_i) + sqrt(2 eta) w_i."""
    eta = state.hyper.eta
    s = mixing_matrix(topo) if mixing is None else mixing
    x_new = s @ state.x - eta * _gradients(state.x, potentials) + np.sqrt(2 * eta) * noise.w
    return replace(state, x=x_new, k=state.k + 1)


def dsghmc_step(
    state: LangevinState,
    topo: Topology,
    potentials: Sequence[LocalPotential],
    noise: NoiseDraw,
    mixing: Optional[np.ndarray] = None,
) -> LangevinState:
    """
    Momentum update from round-k x, then mixing plus drift:

    v_i <- v_i - eta (gamma v_i + grad f_i(x_i)) + sqrt(2 gamma eta) w_i
    x_i <- sum_j S_ij x_j + eta v_i
    """
    eta, gamma = state.hyper.eta, state.hyper.gamma
    s = mixing_matrix(topo) if mixing is None else mixing
    grads = _gradients(state.x, potentials)
    v_new = state.v - eta * (gamma * state.v + grads) + np.sqrt(2 * gamma * eta) * noise.w
    x_new = s @ state.x + eta * v_new
    return replace(state, x=x_new, v=v_new, k=state.k + 1)


def dula_step(
    state: LangevinState,
    topo: Topology,
    potentials: Sequence[LocalPotential],
    noise: NoiseDraw,
    k: Optional[int] = None,
) -> LangevinState:
    """
    x_i <- x_i - zeta_k sum_j (x_i - x_j) - alpha_k N grad f_i(x_i) + sqrt(2 alpha_k) w_i.

    ``noise`` must already carry the N(0, N I) scaling.
    """
    k = state.k if k is None else k
    hyper: DulaHyper = state.hyper
    alpha, zeta = hyper.alpha(k), hyper.zeta(k)
    x = state.x
    disagreement = np.zeros_like(x)
    for i in range(topo.n_agents):
        nbrs = list(topo.neighbors(i))
        if nbrs:
            disagreement[i] = np.sum(x[i] - x[nbrs], axis=0)
    n = topo.n_agents
    x_new = x - zeta * disagreement - alpha * n * _gradients(x, potentials) + np.sqrt(2 * alpha) * noise.w
    return replace(state, x=x_new, k=state.k + 1)


@dataclass(frozen=True)
class InitDistribution:
    """N(mean, factor factor^T) for the initial iterates x_i^(0)."""

    mean: np.ndarray
    factor: np.ndarray
    kind: str = "standard"

    def draw(self, rng: np.random.Generator, n_agents: int) -> np.ndarray:
        z = rng.standard_normal((n_agents, self.mean.shape[0]))
        return self.mean + z @ self.factor.T

    @property
    def covariance(self) -> np.ndarray:
        return self.factor @ self.factor.T


def _fit_mean(mean: Optional[Sequence[float]], d: int, default: Sequence[float]) -> np.ndarray:
    values = list(default if mean is None else mean)[:d]
    return np.array(values + [0.0] * (d - len(values)), dtype=float)


def make_init(
    kind: str,
    d: int,
    root_seed: int = 0,
    mean: Optional[Sequence[float]] = None,
    cov: Optional[np.ndarray] = None,
    scale: float = 10.0,
) -> InitDistribution:
    """
    Initial-iterate distribution.

    ``standard`` is N(0, I); ``gaussian`` is N(mean, cov); ``random_gaussian``
    is N(mean, A A^T) with A_ij ~ U(0, scale) drawn once from the run's init
    stream, mean defaulting to (-1, 2) cut or zero-padded to d.
    """
    if kind == "standard":
        return InitDistribution(np.zeros(d), np.eye(d), kind)
    if kind == "gaussian":
        centre = _fit_mean(mean, d, [0.0] * d)
        c = np.eye(d) if cov is None else np.asarray(cov, dtype=float)
        if c.shape != (d, d):
            raise ValueError(f"init covariance must be {d}x{d}.")
        return InitDistribution(centre, np.linalg.cholesky(0.5 * (c + c.T)), kind)
    if kind == "random_gaussian":
        if scale <= 0:
            raise ValueError("init scale must be positive.")
        rng = stream(root_seed, "init/covariance")
        a = rng.uniform(0.0, scale, size=(d, d))
        return InitDistribution(_fit_mean(mean, d, [-1.0, 2.0]), a, kind)
    raise ValueError(f"Unknown init kind: {kind!r}")


@dataclass
class ChainHistory:
    """
    Recorded iterates of one chain.

    Attributes:
        iterations (ndarray): Recorded iteration indices, starting at 0.
        x (ndarray): Iterates, shape (len(iterations), N, d).
    """

    algorithm: str
    iterations: np.ndarray
    x: np.ndarray
    final_state: object = field(default=None, repr=False)

    def at(self, k: int) -> np.ndarray:
        idx = np.searchsorted(self.iterations, k)
        if idx >= len(self.iterations) or self.iterations[idx] != k:
            raise KeyError(f"Iteration {k} was not recorded.")
        return self.x[idx]

    def records(self, trial: int) -> Iterator[Tuple[int, int, int, int, float]]:
        """Flat (trial, iteration, agent, component, value) rows."""
        for t, k in enumerate(self.iterations):
            for agent, vec in enumerate(self.x[t]):
                for comp, value in enumerate(vec):
                    yield trial, int(k), agent, comp, float(value)


NoiseHook = Callable[[int], NoiseDraw]


def run_chain(
    algorithm: str,
    problem: Problem,
    topo: Topology,
    hyper: Hyper,
    n_iters: int,
    trial_seed: int,
    thin: int = 1,
    init: Optional[InitDistribution] = None,
    x0: Optional[np.ndarray] = None,
    noise_hook: Optional[NoiseHook] = None,
) -> ChainHistory:
    """
    Run one chain and record its iterates.

    Initial iterates come from the trial's ``init`` stream, so every algorithm
    of a trial starts from the same point; chain noise comes from the
    trial's ``noise/<algorithm>`` stream.

    Args:
        algorithm (str): One of ``ALGORITHMS``.
        problem: LinRegProblem or LogRegProblem.
        topo (Topology): Graph with ``problem.n_agents`` agents.
        hyper: Hyperparameters matching ``algorithm``.
        n_iters (int): Number of rounds.
        trial_seed (int): Seed of the trial's streams.
        thin (int): Record every ``thin``-th iterate (k = 0 and k = n_iters always kept).
        init (InitDistribution): Initial distribution, N(0, I) by default.
        x0 (ndarray): Explicit initial iterates, overriding ``init``.
        noise_hook (callable): k -> NoiseDraw, replacing the noise stream.

    Returns:
        ChainHistory: Recorded iterates.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"Unknown algorithm: {algorithm!r}")
    if not isinstance(hyper, HYPER_TYPES[algorithm]):
        raise ValueError(f"{algorithm} needs {HYPER_TYPES[algorithm].__name__}, got {type(hyper).__name__}.")
    if topo.n_agents != problem.n_agents:
        raise ValueError("Topology and problem disagree on the number of agents.")
    if n_iters < 0 or thin < 1:
        raise ValueError("n_iters must be non-negative and thin at least 1.")

    n, d = problem.n_agents, problem.d
    potentials = problem.potentials()
    if x0 is None:
        dist = init if init is not None else make_init("standard", d)
        x0 = dist.draw(stream(trial_seed, "init"), n)
    noise_rng = stream(trial_seed, f"noise/{algorithm}")
    noise_scale = np.sqrt(n) if algorithm == "dula" else 1.0

    def next_noise(k: int) -> NoiseDraw:
        if noise_hook is not None:
            return noise_hook(k)
        return draw_noise(noise_rng, n, d, noise_scale)

    if algorithm in ("dadmms", "admm"):
        state = AdmmState.initial(x0, hyper.rho, noise_on=algorithm == "dadmms")
    else:
        state = LangevinState.initial(x0, hyper)
    mixing = mixing_matrix(topo) if algorithm in ("dsgld", "dsghmc") else None

    recorded: List[int] = [0]
    frames: List[np.ndarray] = [state.x.copy()]
    with np.errstate(over="raise", invalid="raise"):
        for k in range(n_iters):
            if algorithm == "dadmms":
                state = dadmms_step(state, topo, potentials, next_noise(k))
            elif algorithm == "admm":
                state = cadmms_step(state, topo, potentials)
            elif algorithm == "dsgld":
                state = dsgld_step(state, topo, potentials, next_noise(k), mixing)
            elif algorithm == "dsghmc":
                state = dsghmc_step(state, topo, potentials, next_noise(k), mixing)
            else:
                state = dula_step(state, topo, potentials, next_noise(k), k)
            if (k + 1) % thin == 0 or k + 1 == n_iters:
                recorded.append(k + 1)
                frames.append(state.x.copy())
    return ChainHistory(algorithm, np.array(recorded), np.stack(frames), final_state=state)
