"""
Convergence-theory quantities for D-ADMMS.

Contraction constants (delta, a..e), the penalty and kappa that maximize delta,
the sufficient condition for a < 1, a numerical evaluation of the Wasserstein
bound, and direct checks of the (Z, beta) reformulation and the KKT point.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import sympy as sp

from .graph import ExtendedMatrices, SpectralConstants, Topology, extend_matrices, spectral_constants
from .metrics import GaussianSummary, empirical_gaussian, wasserstein2_gaussian
from .problems import LinRegProblem, Problem, linreg_true_posterior, pooled_minimizer, strong_convexity_constants
from .samplers import AdmmHyper, AdmmState, NoiseDraw, dadmms_step, draw_noise, run_chain
from .streams import derive_seed, stream

logger = logging.getLogger(__name__)

MIN_MC_SAMPLES = 10_000
DEFAULT_MC_SAMPLES = 100_000


class NotContractiveError(ValueError):
    """Contraction factor a >= 1, or kappa <= 1."""


def delta_of(kappa: float, rho: float, spectra: SpectralConstants, m_f: float, big_m_f: float) -> float:
    """
    delta(kappa, rho) = min{ (kappa-1) s_min^2(M-) / (kappa s_max^2(M+)),
                             m_f / (rho/4 s_max^2(M+) + kappa M_f^2 / (rho s_min^2(M-))) }.
    """
    if kappa <= 1:
        raise NotContractiveError(f"kappa must exceed 1, got {kappa}.")
    if rho <= 0:
        raise ValueError("rho must be positive.")
    s_min2 = spectra.sigma_min_m_minus ** 2
    s_max2 = spectra.sigma_max_m_plus ** 2
    first = (kappa - 1) * s_min2 / (kappa * s_max2)
    second = m_f / (rho / 4 * s_max2 + kappa * big_m_f ** 2 / (rho * s_min2))
    return float(min(first, second))


def optimal_rho(kappa: float, spectra: SpectralConstants, big_m_f: float) -> float:
    """rho*(kappa) = 2 sqrt(kappa) M_f / (s_min(M-) s_max(M+)), maximizer of delta's second argument."""
    if kappa <= 1:
        raise NotContractiveError(f"kappa must exceed 1, got {kappa}.")
    return float(2 * np.sqrt(kappa) * big_m_f / (spectra.sigma_min_m_minus * spectra.sigma_max_m_plus))


def optimal_kappa(tau_f: float, tau_g: float) -> float:
    """
    kappa* = 1 + t^2/2 + sqrt(t^4 + 4 t^2)/2 with t = tau_G / tau_f.

    Example:
        >>> round(optimal_kappa(1.0, 1.0), 6)
        2.618034
    """
    if tau_f <= 0 or tau_g <= 0:
        raise ValueError("tau_f and tau_g must be positive.")
    t2 = (tau_g / tau_f) ** 2
    return float(1 + 0.5 * t2 + 0.5 * np.sqrt(t2 ** 2 + 4 * t2))


def delta_max(tau_f: float, tau_g: float) -> float:
    """
    Largest achievable delta: 1/(2 tau_f) sqrt(1/tau_f^2 + 4/tau_G^2) - 1/(2 tau_f^2).

    Example:
        >>> round(delta_max(1.0, 1.0), 6)
        0.618034
    """
    if tau_f <= 0 or tau_g <= 0:
        raise ValueError("tau_f and tau_g must be positive.")
    return float(np.sqrt(1 / tau_f ** 2 + 4 / tau_g ** 2) / (2 * tau_f) - 1 / (2 * tau_f ** 2))


def delta_max_branches(kappa: float, tau_f: float, tau_g: float) -> Tuple[float, float]:
    """The two arguments of delta at rho*(kappa): (kappa-1)/(kappa tau_G^2) and 1/(tau_f tau_G sqrt(kappa))."""
    return (kappa - 1) / (kappa * tau_g ** 2), 1 / (tau_f * tau_g * np.sqrt(kappa))


@dataclass(frozen=True)
class ConditionVerdict:
    holds: bool
    margin: float
    lhs: float
    rhs: float


def sufficient_condition(m_f: float, tau_f: float, tau_g: float) -> ConditionVerdict:
    """
    tau_f^{-1} sqrt(tau_f^{-2} + 4 tau_G^{-2}) - tau_f^{-2} > 1/m_f.

    Equivalent to 2 m_f delta_max > 1, i.e. a < 1 at the optimal (kappa, rho).
    """
    if m_f <= 0 or tau_f <= 0 or tau_g <= 0:
        raise ValueError("m_f, tau_f and tau_g must be positive.")
    lhs = float(np.sqrt(tau_f ** -2 + 4 * tau_g ** -2) / tau_f - tau_f ** -2)
    rhs = 1.0 / m_f
    return ConditionVerdict(holds=lhs > rhs, margin=lhs - rhs, lhs=lhs, rhs=rhs)


def tau_f_threshold(m_f: float, tau_g: float) -> Optional[float]:
    """
    Largest tau_f for which the sufficient condition holds, or None if it never holds.

    With c = 4/tau_G^2 and r = 1/m_f the condition reads tau_f < sqrt(c - 2r)/r.

    Example:
        >>> round(tau_f_threshold(2.0, np.sqrt(8 / 5)), 6) == round(np.sqrt(6), 6)
        True
    """
    c = 4.0 / tau_g ** 2
    r = 1.0 / m_f
    if c <= 2 * r:
        return None
    return float(np.sqrt(c - 2 * r) / r)


def threshold_expression() -> sp.Expr:
    """Symbolic tau_f threshold in terms of m_f and tau_G."""
    m_f, tau_g = sp.symbols("m_f tau_G", positive=True)
    c = 4 / tau_g ** 2
    r = 1 / m_f
    return sp.simplify(sp.sqrt(c - 2 * r) / r)


def threshold_condition_expression() -> Tuple[sp.Expr, Tuple[sp.Symbol, sp.Symbol, sp.Symbol]]:
    """LHS - RHS of the sufficient condition as a sympy expression in (tau_f, tau_G, m_f)."""
    tau_f, tau_g, m_f = sp.symbols("tau_f tau_G m_f", positive=True)
    expr = sp.sqrt(tau_f ** -2 + 4 * tau_g ** -2) / tau_f - tau_f ** -2 - 1 / m_f
    return expr, (tau_f, tau_g, m_f)


@dataclass(frozen=True)
class TheoryConstants:
    """Contraction constants at a given (kappa, rho)."""

    kappa: float
    rho: float
    delta: float
    a: float
    b: float
    c: float
    d_const: float
    e: float
    m_f: float
    big_m_f: float
    tau_f: float
    tau_g: float
    sigma_max_m_plus: float
    sigma_min_m_minus: float
    sigma_max_m_minus: float

    @property
    def contractive(self) -> bool:
        return self.a < 1

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def contraction_constants(
    spectra: SpectralConstants,
    m_f: float,
    big_m_f: float,
    kappa: Optional[float] = None,
    rho: Optional[float] = None,
) -> TheoryConstants:
    """
    Evaluate delta and a..e.

    kappa defaults to kappa*(tau_f, tau_G) and rho to rho*(kappa).

    a = (2 m_f + 1) / (2 m_f (1 + delta)), b = 1 / (2 (1 + delta)),
    c = 2 sqrt(2) delta / ((1 + delta) s_min^2(M-)), d = rho s_max^2(M-) / 2,
    e = 2 delta / ((1 + delta) rho s_min^2(M-)).
    """
    if m_f <= 0 or big_m_f < m_f:
        raise ValueError("Need 0 < m_f <= M_f.")
    tau_f = big_m_f / m_f
    tau_g = spectra.tau_g
    kappa = optimal_kappa(tau_f, tau_g) if kappa is None else float(kappa)
    rho = optimal_rho(kappa, spectra, big_m_f) if rho is None else float(rho)
    delta = delta_of(kappa, rho, spectra, m_f, big_m_f)
    s_min2 = spectra.sigma_min_m_minus ** 2
    return TheoryConstants(
        kappa=kappa,
        rho=rho,
        delta=delta,
        a=(2 * m_f + 1) / (2 * m_f * (1 + delta)),
        b=1 / (2 * (1 + delta)),
        c=2 * np.sqrt(2) * delta / ((1 + delta) * s_min2),
        d_const=rho * spectra.sigma_max_m_minus ** 2 / 2,
        e=2 * delta / ((1 + delta) * rho * s_min2),
        m_f=m_f,
        big_m_f=big_m_f,
        tau_f=tau_f,
        tau_g=tau_g,
        sigma_max_m_plus=spectra.sigma_max_m_plus,
        sigma_min_m_minus=spectra.sigma_min_m_minus,
        sigma_max_m_minus=spectra.sigma_max_m_minus,
    )


def expected_dw_norm_sq(topo: Topology, d: int) -> float:
    """E|D w|^2 = d sum_i N_i^2 for w ~ N(0, I_{Nd})."""
    return float(d * np.sum(topo.degrees.astype(float) ** 2))


def _noise_coefficients(k: TheoryConstants) -> Tuple[float, float]:
    """
    y = alpha |Dw| and r = beta |Dw|^2 where w_bar = (1/(sqrt(2) m_f) + sqrt(2)) |Dw|.
    """
    m = k.m_f
    wbar = 1 / (np.sqrt(2) * m) + np.sqrt(2)
    alpha = 2 * k.b / np.sqrt(m) * wbar + k.c * k.sigma_max_m_minus * np.sqrt(k.rho) + k.c * k.d_const / np.sqrt(m)
    beta = (
        np.sqrt(2) * k.b / m * wbar
        + k.b * wbar ** 2
        + k.b / (2 * m ** 2)
        + np.sqrt(2) * k.c * k.d_const / m
        - k.e
    )
    return float(alpha), float(beta)


def noise_terms(
    constants: TheoryConstants,
    topo: Topology,
    d: int,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
) -> Dict[str, float]:
    """
    Monte Carlo Y = E(y), R = |E(r)| over w ~ N(0, I_{Nd}), plus the
    deterministic Jensen Y and the closed-form R.
    """
    if mc_samples < MIN_MC_SAMPLES:
        raise ValueError(f"mc_samples must be at least {MIN_MC_SAMPLES}.")
    deg = np.repeat(topo.degrees.astype(float), d)
    rng = stream(seed, "theory/mc")
    norms = np.empty(mc_samples)
    chunk = 10_000
    for start in range(0, mc_samples, chunk):
        stop = min(start + chunk, mc_samples)
        w = rng.standard_normal((stop - start, deg.size))
        norms[start:stop] = np.linalg.norm(w * deg, axis=1)
    alpha, beta = _noise_coefficients(constants)
    second = expected_dw_norm_sq(topo, d)
    return {
        "Y": float(alpha * norms.mean()),
        "R": float(abs(beta * np.mean(norms ** 2))),
        "Y_jensen": float(alpha * np.sqrt(second)),
        "R_exact": float(abs(beta * second)),
        "expected_dw_norm_sq": second,
        "mc_dw_norm_sq": float(np.mean(norms ** 2)),
    }


@dataclass
class BoundTrajectory:
    """
    Upper bounds b_k on W(mu_{X^(k+1)}, mu*), k = 0..n_iters-1.

    ``tail`` is None when the noise-tail distance was not evaluated.
    """

    values: np.ndarray
    floor: float
    w0: float
    y_bound: float
    r_bound: float
    dw_term: float
    tail: Optional[float]
    constants: TheoryConstants
    extras: Dict[str, float] = field(default_factory=dict)

    def bound_at(self, iteration: int) -> float:
        """Bound on the distance of X^(iteration), iteration >= 1."""
        if not 1 <= iteration <= len(self.values):
            raise IndexError(f"No bound for iteration {iteration}.")
        return float(self.values[iteration - 1])


def bound_trajectory(
    constants: TheoryConstants,
    topo: Topology,
    d: int,
    n_iters: int,
    w0: float,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    tail: Optional[float] = None,
    noiseless: bool = False,
    jensen: bool = False,
) -> BoundTrajectory:
    """
    b_k = (sqrt a)^k w0 / sqrt(m_f) + Y / (sqrt(a m_f) (1 - sqrt a))
          + sqrt(R) / (sqrt(m_f) (1 - sqrt a)) + sqrt(E|Dw|^2) / (sqrt(2) m_f) + tail

    Args:
        constants (TheoryConstants): Must have a < 1.
        topo (Topology): Graph (degrees enter through D).
        d (int): Parameter dimension.
        n_iters (int): Number of bound values.
        w0 (float): Initial W_G distance.
        mc_samples (int): Monte Carlo draws for Y and R.
        seed (int): Root seed of the Monte Carlo stream.
        tail (float): W distance of the noise-perturbed optimum to the target, if known.
        noiseless (bool): Drop every noise term, leaving pure geometric decay.
        jensen (bool): Use the deterministic Y and closed-form R.

    Raises:
        NotContractiveError: If a >= 1.
    """
    a = constants.a
    if a >= 1:
        raise NotContractiveError(f"Contraction factor a = {a:.6f} is not below 1.")
    m = constants.m_f
    sa = np.sqrt(a)
    geometric = sa ** np.arange(n_iters) * w0 / np.sqrt(m)
    if noiseless:
        return BoundTrajectory(geometric, 0.0, w0, 0.0, 0.0, 0.0, 0.0, constants)
    terms = noise_terms(constants, topo, d, mc_samples, seed)
    y_bound = terms["Y_jensen"] if jensen else terms["Y"]
    r_bound = terms["R_exact"] if jensen else terms["R"]
    dw_term = np.sqrt(terms["expected_dw_norm_sq"]) / (np.sqrt(2) * m)
    floor = y_bound / (np.sqrt(a * m) * (1 - sa)) + np.sqrt(r_bound) / (np.sqrt(m) * (1 - sa)) + dw_term
    if tail is not None:
        floor += tail
    return BoundTrajectory(
        geometric + floor, float(floor), w0, y_bound, r_bound, float(dw_term), tail, constants, terms
    )


def product_target(problem: LinRegProblem) -> GaussianSummary:
    """N posterior copies stacked: N(1 (x) mean, I (x) cov)."""
    post = linreg_true_posterior(problem)
    n = problem.n_agents
    return GaussianSummary(np.tile(post.mean, n), np.kron(np.eye(n), post.covariance))


def noise_tail_distance(problem: Problem, topo: Topology, m_f: float) -> Optional[float]:
    """
    W(N(X*, D^2/(2 m_f^2)), product posterior) for linear regression; None otherwise.
    """
    if not isinstance(problem, LinRegProblem):
        return None
    x_star = np.tile(pooled_minimizer(problem), problem.n_agents)
    deg = np.repeat(topo.degrees.astype(float), problem.d)
    perturbed = GaussianSummary(x_star, np.diag(deg ** 2) / (2 * m_f ** 2))
    return wasserstein2_gaussian(perturbed, product_target(problem))


@dataclass
class KktResiduals:
    stationarity: float
    consensus: float
    z_definition: float
    beta_star: np.ndarray
    z_star: np.ndarray
    x_star: np.ndarray


def kkt_residuals(problem: Problem, topo: Topology, x_star: Optional[np.ndarray] = None) -> KktResiduals:
    """
    Residuals of the KKT system at the replicated minimizer.

    beta* is the minimum-norm least-squares solution of M- beta = -grad f(X*),
    which lies in the column space of M-^T.
    """
    mats = extend_matrices(topo, problem.d)
    spectral_constants(mats)
    centre = pooled_minimizer(problem) if x_star is None else np.asarray(x_star, dtype=float)
    x_rep = np.tile(centre, problem.n_agents)
    pots = problem.potentials()
    grad = np.concatenate([pots[i].grad(centre) for i in range(problem.n_agents)])
    beta = -np.linalg.pinv(mats.m_minus) @ grad
    z_star = 0.5 * mats.m_plus.T @ x_rep
    return KktResiduals(
        stationarity=float(np.linalg.norm(grad + mats.m_minus @ beta)),
        consensus=float(np.linalg.norm(mats.m_minus.T @ x_rep)),
        z_definition=float(np.linalg.norm(0.5 * mats.m_plus.T @ x_rep - z_star)),
        beta_star=beta,
        z_star=z_star,
        x_star=x_rep,
    )


def initial_wg_distance(
    x0_samples: np.ndarray,
    mats: ExtendedMatrices,
    z_star: np.ndarray,
    beta_star: np.ndarray,
    rho: float,
) -> float:
    """
    W_G at k = 0 under the coupling with the point mass (Z*, beta*):
    sqrt(rho E|M+^T X0/2 - Z*|^2 + |beta*|^2 / rho), since beta^(0) = 0.
    """
    flat = np.asarray(x0_samples, dtype=float).reshape(len(x0_samples), -1)
    z0 = 0.5 * flat @ mats.m_plus
    z_gap = float(np.mean(np.sum((z0 - z_star) ** 2, axis=1)))
    return float(np.sqrt(rho * z_gap + float(beta_star @ beta_star) / rho))


@dataclass
class Lemma1Report:
    max_x_deviation: float
    max_dual_deviation: float
    max_column_space_residual: float
    n_iters: int


def lemma1_equivalence(
    problem: Problem,
    topo: Topology,
    rho: float,
    n_iters: int,
    seed: int,
    noise_on: bool = True,
) -> Lemma1Report:
    """
    Run D-ADMMS and the (Z, beta) recursion side by side with the same noise.

    The recursion solves, per agent,
    argmin f_i(x) + N_i rho |x|^2 + (M- beta - rho M+ Z + sqrt(2) D w)_i^T x,
    then sets beta <- beta + rho/2 M-^T X and Z <- M+^T X / 2.
    """
    d, n = problem.d, problem.n_agents
    mats = extend_matrices(topo, d)
    pots = problem.potentials()
    degrees = topo.degrees
    x0 = stream(seed, "init").standard_normal((n, d))
    noise_rng = stream(seed, "noise/lemma1")
    noises: List[NoiseDraw] = [
        draw_noise(noise_rng, n, d) if noise_on else NoiseDraw.zeros(n, d) for _ in range(n_iters)
    ]

    state = AdmmState.initial(x0, rho, noise_on=noise_on)
    x_lemma = x0.copy()
    z = 0.5 * mats.m_plus.T @ x_lemma.ravel()
    beta = np.zeros(mats.m_minus.shape[1])
    if mats.n_arcs:
        m_t = mats.m_minus.T
        projector = m_t @ np.linalg.pinv(m_t)
    else:
        projector = None

    max_x = max_dual = max_col = 0.0
    for k in range(n_iters):
        state = dadmms_step(state, topo, pots, noises[k])
        residual = (mats.m_minus @ beta - rho * mats.m_plus @ z).reshape(n, d)
        x_next = np.empty((n, d))
        for i in range(n):
            linear = residual[i] + np.sqrt(2) * degrees[i] * noises[k].w[i]
            x_next[i] = pots[i].minimize_regularized(2 * rho * degrees[i], linear)
        flat = x_next.ravel()
        beta = beta + 0.5 * rho * mats.m_minus.T @ flat
        z = 0.5 * mats.m_plus.T @ flat
        x_lemma = x_next
        max_x = max(max_x, float(np.max(np.abs(state.x - x_lemma))))
        max_dual = max(max_dual, float(np.max(np.abs(state.p.ravel() - mats.m_minus @ beta))))
        if projector is not None:
            max_col = max(max_col, float(np.linalg.norm(beta - projector @ beta)))
    logger.info("(Z, beta) recursion deviation after %d iterations: %.3e", n_iters, max_x)
    return Lemma1Report(max_x, max_dual, max_col, n_iters)


def lemma3_slack(x: np.ndarray, y: np.ndarray, kappa: float) -> float:
    """|x + y|^2 + (kappa - 1)|x|^2 - (1 - 1/kappa)|y|^2, non-negative for kappa > 1."""
    if kappa <= 1:
        raise NotContractiveError("kappa must exceed 1.")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float((x + y) @ (x + y) + (kappa - 1) * (x @ x) - (1 - 1 / kappa) * (y @ y))


@dataclass
class TheoryReport:
    """Everything the ``theory`` command prints."""

    spectra: SpectralConstants
    constants: TheoryConstants
    delta_max: float
    verdict: ConditionVerdict
    tau_f_threshold: Optional[float]
    n_agents: int
    kind: str

    def as_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "topology": self.kind,
            "n_agents": self.n_agents,
            "tau_g": self.constants.tau_g,
            "tau_f": self.constants.tau_f,
            "m_f": self.constants.m_f,
            "M_f": self.constants.big_m_f,
            "kappa_star": self.constants.kappa,
            "rho_star": self.constants.rho,
            "delta_max": self.delta_max,
            "delta": self.constants.delta,
            "a": self.constants.a,
            "b": self.constants.b,
            "c": self.constants.c,
            "d": self.constants.d_const,
            "e": self.constants.e,
            "sigma_max_m_plus": self.spectra.sigma_max_m_plus,
            "sigma_min_m_minus": self.spectra.sigma_min_m_minus,
            "sigma_max_m_minus": self.spectra.sigma_max_m_minus,
            "sufficient_condition": self.verdict.holds,
            "margin": self.verdict.margin,
            "tau_f_threshold": self.tau_f_threshold,
        }
        return out


def theory_report(
    topo: Topology,
    d: int,
    problem: Optional[Problem] = None,
    m_f: Optional[float] = None,
    tau_f: Optional[float] = None,
    kappa: Optional[float] = None,
    rho: Optional[float] = None,
) -> TheoryReport:
    """
    Assemble the theory table.

    m_f and tau_f come from ``problem`` unless overridden; at least one source is required.
    """
    spectra = spectral_constants(extend_matrices(topo, d))
    if problem is not None:
        pm, pbig, ptau = strong_convexity_constants(problem)
        m_f = pm if m_f is None else m_f
        tau_f = ptau if tau_f is None else tau_f
    if m_f is None or tau_f is None:
        raise ValueError("m_f and tau_f are needed, either directly or from a problem.")
    constants = contraction_constants(spectra, m_f, tau_f * m_f, kappa=kappa, rho=rho)
    verdict = sufficient_condition(m_f, tau_f, spectra.tau_g)
    if not constants.contractive:
        logger.warning("Contraction factor a = %.4f is not below 1", constants.a)
    return TheoryReport(
        spectra=spectra,
        constants=constants,
        delta_max=delta_max(tau_f, spectra.tau_g),
        verdict=verdict,
        tau_f_threshold=tau_f_threshold(m_f, spectra.tau_g),
        n_agents=topo.n_agents,
        kind=topo.kind,
    )


@dataclass
class ContainmentReport:
    """Measured joint W2 of X^(k) against the bound b_{k-1}, k = 1..n_iters."""

    measured: np.ndarray
    bound: BoundTrajectory

    @property
    def violations(self) -> int:
        return int(np.sum(self.measured > self.bound.values))

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.measured / self.bound.values))


def bound_containment(
    problem: LinRegProblem,
    topo: Topology,
    rho: float,
    n_trials: int,
    n_iters: int,
    seed: int = 0,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    kappa: Optional[float] = None,
) -> ContainmentReport:
    """
    Run D-ADMMS for ``n_trials`` trials and compare the empirical joint W2 of
    X^(k) to the product posterior with the bound trajectory evaluated at the
    run's rho and the measured initial W_G distance.

    Raises:
        NotContractiveError: If the constants at (kappa, rho) give a >= 1.
    """
    if not isinstance(problem, LinRegProblem):
        raise ValueError("Bound containment needs a linear regression problem.")
    d = problem.d
    mats = extend_matrices(topo, d)
    spectra = spectral_constants(mats)
    m_f, big_m_f, tau_f = strong_convexity_constants(problem)
    if kappa is None:
        kappa = optimal_kappa(tau_f, spectra.tau_g)
    constants = contraction_constants(spectra, m_f, big_m_f, kappa=kappa, rho=rho)
    if not constants.contractive:
        raise NotContractiveError(f"Contraction factor a = {constants.a:.6f} is not below 1.")

    seeds = [derive_seed(seed, "trial", t) for t in range(n_trials)]
    histories = [run_chain("dadmms", problem, topo, AdmmHyper(rho), n_iters, s) for s in seeds]
    kkt = kkt_residuals(problem, topo)
    x0 = np.stack([h.x[0] for h in histories])
    w0 = initial_wg_distance(x0, mats, kkt.z_star, kkt.beta_star, rho)
    tail = noise_tail_distance(problem, topo, m_f)
    bound = bound_trajectory(constants, topo, d, n_iters, w0, mc_samples, seed, tail)

    target = product_target(problem)
    measured = np.array([
        wasserstein2_gaussian(empirical_gaussian(np.stack([h.x[k].ravel() for h in histories])), target)
        for k in range(1, n_iters + 1)
    ])
    report = ContainmentReport(measured, bound)
    logger.info("Bound containment: %d violations, max measured/bound %.3f", report.violations, report.max_ratio)
    return report
