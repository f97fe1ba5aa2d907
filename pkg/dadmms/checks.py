"""
Property suites over the graph, problem, metric, sampler and theory modules.

Each check returns a ``CheckResult``; ``run_all`` collects them for the
``selftest`` command and the test suite.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import networkx as nx
import numpy as np
import sympy as sp

from .graph import (
    Topology,
    build_topology,
    extend_matrices,
    incidence_integer,
    laplacians_integer,
    mixing_matrix,
    singular_value_constants,
    spectral_constants,
    topology_from_edges,
)
from .metrics import GaussianSummary, wasserstein2_gaussian
from .problems import LocalPotential, generate_linreg, generate_logreg
from .samplers import AdmmHyper, run_chain
from .streams import stream
from .theory import (
    contraction_constants,
    delta_max,
    lemma3_slack,
    sufficient_condition,
    tau_f_threshold,
    threshold_condition_expression,
)

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float = 0.0
    detail: str = ""


def laplacian_identities(topo: Topology) -> CheckResult:
    """L+ = M+ M+^T / 2, L- = M- M-^T / 2 and D = (L+ + L-) / 2, exactly over the integers."""
    m_plus, m_minus = (sp.Matrix(m.tolist()) for m in incidence_integer(topo))
    lap = {k: sp.Matrix(v.tolist()) for k, v in laplacians_integer(topo).items()}
    ok = (
        2 * lap["l_plus"] == m_plus * m_plus.T
        and 2 * lap["l_minus"] == m_minus * m_minus.T
        and 2 * lap["deg"] == lap["l_plus"] + lap["l_minus"]
    )
    return CheckResult(f"laplacian identities ({topo.kind}, N={topo.n_agents})", bool(ok))


def consensus_nullspace(topo: Topology, d: int = 2, seed: int = 0) -> CheckResult:
    """M-^T annihilates consensus vectors 1 (x) v."""
    mats = extend_matrices(topo, d)
    v = stream(seed, "checks/consensus").standard_normal(d)
    value = float(np.linalg.norm(mats.m_minus.T @ np.tile(v, topo.n_agents)))
    return CheckResult(f"consensus in null(M-^T) ({topo.kind})", value <= 1e-12, value)


def tau_g_agreement(topo: Topology, d: int = 2) -> CheckResult:
    """tau_G from the Laplacian spectra, the singular values and the Laplacian ratio agree."""
    mats = extend_matrices(topo, d)
    spectra = spectral_constants(mats)
    s_plus, s_minus, _ = singular_value_constants(mats)
    gap = max(
        abs(spectra.tau_g - s_plus / s_minus),
        abs(spectra.tau_g - spectra.tau_g_from_laplacians),
    )
    return CheckResult(f"tau_G agreement ({topo.kind}, N={topo.n_agents})", gap <= 1e-9, gap)


def mixing_checks(topo: Topology) -> CheckResult:
    """Metropolis matrix is symmetric, non-negative, doubly stochastic and follows the graph."""
    s = mixing_matrix(topo)
    adjacency = nx.to_numpy_array(topo.to_networkx(), nodelist=list(range(topo.n_agents))) > 0
    off_support = s[~adjacency & ~np.eye(topo.n_agents, dtype=bool)]
    worst = max(
        float(np.max(np.abs(s.sum(axis=0) - 1))),
        float(np.max(np.abs(s.sum(axis=1) - 1))),
        float(np.max(np.abs(s - s.T))),
        float(np.max(np.abs(off_support))) if off_support.size else 0.0,
    )
    return CheckResult(f"mixing matrix ({topo.kind})", worst <= 1e-12 and s.min() >= 0, worst)


FD_STEP = 1e-5


def gradient_check(potential: LocalPotential, name: str, seed: int = 0, n_points: int = 100) -> CheckResult:
    """Gradient against central differences of the value, relative 1e-5."""
    rng = stream(seed, f"checks/fd/{name}")
    d = potential.dim
    worst = 0.0
    for _ in range(n_points):
        x = rng.standard_normal(d)
        g = potential.grad(x)
        fd = np.empty(d)
        for j, e in enumerate(FD_STEP * np.eye(d)):
            fd[j] = (potential.value(x + e) - potential.value(x - e)) / (2 * FD_STEP)
        worst = max(worst, float(np.linalg.norm(fd - g)) / max(1.0, float(np.linalg.norm(g))))
    return CheckResult(f"gradient finite differences ({name})", worst <= 1e-5, worst)


def hessian_check(potential: LocalPotential, name: str, seed: int = 0, n_points: int = 100) -> CheckResult:
    """Each Hessian column against central differences of the gradient, relative 1e-4."""
    rng = stream(seed, f"checks/fd-hess/{name}")
    d = potential.dim
    worst = 0.0
    for _ in range(n_points):
        x = rng.standard_normal(d)
        hess = potential.hess(x)
        for j, e in enumerate(FD_STEP * np.eye(d)):
            fd = (potential.grad(x + e) - potential.grad(x - e)) / (2 * FD_STEP)
            column = hess[:, j]
            err = float(np.linalg.norm(fd - column)) / max(float(np.linalg.norm(column)), 1e-12)
            worst = max(worst, err)
    return CheckResult(f"hessian finite differences ({name})", worst <= 1e-4, worst)


def curvature_check(potential: LocalPotential, name: str, seed: int = 0, n_pairs: int = 1000) -> CheckResult:
    """Sampled pairs respect strong convexity m and gradient Lipschitz constant M."""
    m, big_m = potential.curvature_bounds()
    rng = stream(seed, f"checks/curvature/{name}")
    worst = 0.0
    for _ in range(n_pairs):
        x = 3 * rng.standard_normal(potential.dim)
        y = 3 * rng.standard_normal(potential.dim)
        diff = x - y
        gdiff = potential.grad(x) - potential.grad(y)
        dist2 = float(diff @ diff)
        monotone_slack = float(gdiff @ diff) - m * dist2
        lipschitz_slack = big_m * np.sqrt(dist2) - float(np.linalg.norm(gdiff))
        worst = min(worst, monotone_slack / max(1.0, dist2), lipschitz_slack / max(1.0, np.sqrt(dist2)))
    return CheckResult(f"strong convexity / Lipschitz ({name})", worst >= -1e-9, worst)


def prox_check(potential: LocalPotential, name: str, seed: int = 0) -> CheckResult:
    """Prox points satisfy their optimality condition."""
    rng = stream(seed, f"checks/prox/{name}")
    worst = 0.0
    for gamma in (0.01, 0.1, 1.0, 10.0):
        v = 2 * rng.standard_normal(potential.dim)
        x = potential.prox(gamma, v)
        worst = max(worst, potential.prox_residual(gamma, v, x) * gamma)
    return CheckResult(f"prox optimality ({name})", worst <= 1e-8, worst)


def lemma3_check(n_samples: int = 100_000, seed: int = 0, d: int = 3) -> CheckResult:
    """|x+y|^2 + (kappa-1)|x|^2 >= (1 - 1/kappa)|y|^2 on random triples."""
    rng = stream(seed, "checks/lemma3")
    x = rng.standard_normal((n_samples, d)) * rng.exponential(1.0, (n_samples, 1))
    y = rng.standard_normal((n_samples, d)) * rng.exponential(1.0, (n_samples, 1))
    kappa = 1 + rng.exponential(2.0, n_samples) + 1e-6
    s = x + y
    slack = np.einsum("ij,ij->i", s, s) + (kappa - 1) * np.einsum("ij,ij->i", x, x) - (1 - 1 / kappa) * np.einsum(
        "ij,ij->i", y, y
    )
    scale = 1.0 + np.einsum("ij,ij->i", x, x) * kappa + np.einsum("ij,ij->i", y, y)
    worst = float((slack / scale).min())
    # spot-check the scalar implementation against the vectorized one
    agree = abs(lemma3_slack(x[0], y[0], kappa[0]) - slack[0]) <= 1e-9 * max(1.0, abs(slack[0]))
    return CheckResult("lemma3_slack nonnegative", worst >= -1e-12 and agree, worst)


def contraction_equivalence(n_draws: int = 10_000, seed: int = 0) -> CheckResult:
    """a < 1 exactly when 2 m_f delta > 1."""
    rng = stream(seed, "checks/contraction")
    m_f = np.exp(rng.uniform(-3, 3, n_draws))
    delta = np.exp(rng.uniform(-5, 2, n_draws))
    a = (2 * m_f + 1) / (2 * m_f * (1 + delta))
    product = 2 * m_f * delta
    keep = np.abs(product - 1) > 1e-9
    mismatches = int(np.sum((a[keep] < 1) != (product[keep] > 1)))
    return CheckResult("a < 1 iff 2 m_f delta > 1", mismatches == 0, float(mismatches))


def random_connected_topology(n_agents: int, rng: np.random.Generator) -> Topology:
    while True:
        g = nx.gnp_random_graph(n_agents, 0.4, seed=int(rng.integers(2 ** 31)))
        if nx.is_connected(g):
            return topology_from_edges(n_agents, g.edges(), kind="custom")


def delta_max_consistency(n_graphs: int = 20, seed: int = 0) -> CheckResult:
    """delta at (kappa*, rho*) equals delta_max on random connected graphs."""
    rng = stream(seed, "checks/delta_max")
    worst = 0.0
    for _ in range(n_graphs):
        topo = random_connected_topology(int(rng.integers(3, 21)), rng)
        spectra = spectral_constants(extend_matrices(topo, 2))
        m_f = float(np.exp(rng.uniform(-2, 2)))
        tau_f = float(1 + rng.exponential(3.0))
        k = contraction_constants(spectra, m_f, tau_f * m_f)
        dm = delta_max(tau_f, spectra.tau_g)
        worst = max(worst, abs(k.delta - dm) / dm)
    return CheckResult("delta(kappa*, rho*) = delta_max", worst <= 1e-9, worst)


def threshold_check(m_f: float, tau_g: float) -> CheckResult:
    """Closed-form tau_f threshold is a root of the symbolic condition and flips the verdict."""
    closed = tau_f_threshold(m_f, tau_g)
    if closed is None:
        holds = sufficient_condition(m_f, 1.0, tau_g).holds
        return CheckResult(f"threshold (m_f={m_f:g}, tau_G={tau_g:.4g})", not holds, float("nan"), "no threshold")
    expr, (tf, tg, mf) = threshold_condition_expression()
    root = float(sp.nsolve(expr.subs({tg: tau_g, mf: m_f}), tf, closed * 0.95))
    flips = sufficient_condition(m_f, closed * 0.999, tau_g).holds and not sufficient_condition(
        m_f, closed * 1.001, tau_g
    ).holds
    gap = abs(root - closed)
    return CheckResult(f"threshold (m_f={m_f:g}, tau_G={tau_g:.4g})", gap <= 1e-8 and flips, gap)


def _random_gaussian(rng: np.random.Generator, d: int) -> GaussianSummary:
    a = rng.standard_normal((d, d))
    return GaussianSummary(rng.standard_normal(d), a @ a.T + 1e-3 * np.eye(d))


def wasserstein_axioms(n_triples: int = 1000, seed: int = 0, d: int = 3) -> CheckResult:
    """Non-negativity, symmetry, identity, triangle inequality and homogeneity of W2."""
    rng = stream(seed, "checks/w2")
    worst = 0.0
    for _ in range(n_triples):
        a, b, c = (_random_gaussian(rng, d) for _ in range(3))
        ab = wasserstein2_gaussian(a, b)
        ba = wasserstein2_gaussian(b, a)
        bc = wasserstein2_gaussian(b, c)
        ac = wasserstein2_gaussian(a, c)
        aa = wasserstein2_gaussian(a, a)
        scale = float(rng.uniform(0.1, 10))
        scaled = wasserstein2_gaussian(
            GaussianSummary(scale * a.mean, scale ** 2 * a.covariance),
            GaussianSummary(scale * b.mean, scale ** 2 * b.covariance),
        )
        worst = max(
            worst,
            abs(ab - ba),
            max(0.0, ac - ab - bc),
            aa / max(1.0, np.sqrt(np.trace(a.covariance))),
            abs(scaled - scale * ab) / max(1.0, scale * ab),
            max(0.0, -ab),
        )
    return CheckResult("W2 metric axioms", worst <= 1e-6, worst)


def determinism_check(seed: int = 0) -> CheckResult:
    """Two chains with the same seed are bit-identical."""
    problem = generate_linreg(2, 4.0, 10.0, 5, 20, seed)
    topo = build_topology("ring_cyclic", 5)
    first = run_chain("dadmms", problem, topo, AdmmHyper(5.0), 10, seed)
    second = run_chain("dadmms", problem, topo, AdmmHyper(5.0), 10, seed)
    return CheckResult("chain determinism", bool(np.array_equal(first.x, second.x)))


def graph_suite() -> List[CheckResult]:
    topologies = [
        build_topology("ring_cyclic", 5),
        build_topology("fully_connected", 5),
        build_topology("ring_cyclic", 20),
        build_topology("no_edge", 4),
    ]
    out: List[CheckResult] = []
    for topo in topologies:
        out.append(laplacian_identities(topo))
        out.append(consensus_nullspace(topo))
        out.append(mixing_checks(topo))
        if topo.edges:
            out.append(tau_g_agreement(topo))
    return out


def problem_suite(seed: int = 0) -> List[CheckResult]:
    lin = generate_linreg(2, 4.0, 10.0, 3, 30, seed)
    log = generate_logreg(3, 10.0, 3, 30, seed)
    out: List[CheckResult] = []
    for label, pot in (("linreg", lin.potentials()[0]), ("logreg", log.potentials()[0])):
        out.append(gradient_check(pot, label, seed))
        out.append(hessian_check(pot, label, seed))
        out.append(curvature_check(pot, label, seed))
        out.append(prox_check(pot, label, seed))
    return out


def theory_suite(seed: int = 0) -> List[CheckResult]:
    ring = spectral_constants(extend_matrices(build_topology("ring_cyclic", 5), 2))
    full = spectral_constants(extend_matrices(build_topology("fully_connected", 5), 2))
    return [
        lemma3_check(seed=seed),
        contraction_equivalence(seed=seed),
        delta_max_consistency(seed=seed),
        threshold_check(2.0, ring.tau_g),
        threshold_check(2.0, full.tau_g),
    ]


def metrics_suite(seed: int = 0) -> List[CheckResult]:
    return [wasserstein_axioms(seed=seed)]


SUITES = {
    "graph": graph_suite,
    "problems": problem_suite,
    "metrics": metrics_suite,
    "theory": theory_suite,
    "samplers": lambda: [determinism_check()],
}


def run_all(names: Optional[Sequence[str]] = None) -> List[CheckResult]:
    """Run the named suites (all by default) and log failures."""
    results: List[CheckResult] = []
    for name in names or SUITES:
        if name not in SUITES:
            raise ValueError(f"Unknown suite: {name!r}")
        suite: Callable[[], List[CheckResult]] = SUITES[name]
        for result in suite():
            if not result.passed:
                logger.warning("check failed: %s (%s)", result.name, result.value)
            results.append(result)
    return results
