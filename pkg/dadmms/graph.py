"""
Communication topologies, their extended incidence / Laplacian / degree
matrices, and the spectral quantities used by the convergence theory.

Conventions
-----------
- Agents are 0-indexed. Undirected edges are stored as sorted pairs (i, j), i < j.
- Arcs of the bidirected graph are enumerated edge by edge in lexicographic
  order, (i -> j) before (j -> i).
- Extended matrices act on stacked agent states X = (x_0, ..., x_{N-1}) in R^{N d}.
  M_plus and M_minus have shape (N d, |A| d); column block q of M_plus is
  e_i + e_j and of M_minus is e_i - e_j for arc q = (i -> j).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy import linalg

logger = logging.getLogger(__name__)

TOPOLOGY_KINDS = ("fully_connected", "ring_cyclic", "no_edge", "custom")
CONNECTIVITY_TOL = 1e-10

Edge = Tuple[int, int]


class TopologyError(ValueError):
    """Invalid topology kind, size or edge list."""


class DisconnectedGraphError(ValueError):
    """Spectral constants requested for a graph that is not connected."""


@dataclass(frozen=True)
class Topology:
    """
    Undirected agent graph.

    Attributes:
        n_agents (int): Number of agents N.
        edges (tuple): Sorted tuple of (i, j) pairs with i < j.
        kind (str): One of ``TOPOLOGY_KINDS``.
    """

    n_agents: int
    edges: Tuple[Edge, ...]
    kind: str = "custom"
    _neighbors: Tuple[Tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in TOPOLOGY_KINDS:
            raise TopologyError(f"Unknown topology kind: {self.kind!r}")
        if self.n_agents < 1:
            raise TopologyError("n_agents must be at least 1.")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise TopologyError(f"Self-loop at agent {i}.")
            if not (0 <= i < self.n_agents and 0 <= j < self.n_agents):
                raise TopologyError(f"Edge ({i}, {j}) has an endpoint outside 0..{self.n_agents - 1}.")
            if i > j:
                raise TopologyError(f"Edge ({i}, {j}) is not stored as a sorted pair.")
            if (i, j) in seen:
                raise TopologyError(f"Duplicate edge ({i}, {j}).")
            seen.add((i, j))
        adjacency: List[List[int]] = [[] for _ in range(self.n_agents)]
        for i, j in self.edges:
            adjacency[i].append(j)
            adjacency[j].append(i)
        object.__setattr__(self, "_neighbors", tuple(tuple(sorted(a)) for a in adjacency))

    def neighbors(self, i: int) -> Tuple[int, ...]:
        """Neighborhood N_i, sorted."""
        return self._neighbors[i]

    def degree(self, i: int) -> int:
        return len(self._neighbors[i])

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(n) for n in self._neighbors], dtype=np.int64)

    @property
    def arcs(self) -> List[Edge]:
        """Canonical arc list of the bidirected graph, |A| = 2 |E|."""
        out: List[Edge] = []
        for i, j in self.edges:
            out.append((i, j))
            out.append((j, i))
        return out

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_agents))
        g.add_edges_from(self.edges)
        return g

    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())


def topology_from_edges(n_agents: int, edges: Iterable[Sequence[int]], kind: str = "custom") -> Topology:
    """
    Build a topology from an arbitrary edge iterable.

    Pairs are normalized to (min, max) and sorted; a pair listed twice in
    either orientation is rejected as a duplicate.
    """
    normalized = []
    for pair in edges:
        if len(pair) != 2:
            raise TopologyError(f"Edge {tuple(pair)} does not have two endpoints.")
        i, j = int(pair[0]), int(pair[1])
        normalized.append((min(i, j), max(i, j)))
    return Topology(n_agents=int(n_agents), edges=tuple(sorted(normalized)), kind=kind)


def build_topology(kind: str, n_agents: int) -> Topology:
    """
    Build one of the named topology families.

    Args:
        kind (str): ``fully_connected``, ``ring_cyclic`` or ``no_edge``.
        n_agents (int): Number of agents N >= 1 (N >= 3 for ``ring_cyclic``).

    Returns:
        Topology: Deterministic topology of the requested family.

    Example:
        >>> len(build_topology("fully_connected", 5).edges)
        10
    """
    if n_agents < 1:
        raise TopologyError("n_agents must be at least 1.")
    if kind == "fully_connected":
        g = nx.complete_graph(n_agents)
    elif kind == "ring_cyclic":
        if n_agents < 3:
            raise TopologyError("ring_cyclic requires at least 3 agents.")
        g = nx.cycle_graph(n_agents)
    elif kind == "no_edge":
        g = nx.empty_graph(n_agents)
    elif kind == "custom":
        raise TopologyError("custom topologies are built with topology_from_edges().")
    else:
        raise TopologyError(f"Unknown topology kind: {kind!r}")
    return topology_from_edges(n_agents, g.edges(), kind=kind)


@dataclass(frozen=True, eq=False)
class ExtendedMatrices:
    """
    Extended (Kronecker with I_d) graph matrices.

    Attributes:
        dim (int): Parameter dimension d.
        m_plus, m_minus (ndarray): Unoriented / oriented incidence, (N d, |A| d).
        l_plus, l_minus (ndarray): Signless / signed Laplacian, (N d, N d).
        deg (ndarray): Degree matrix, (N d, N d).
    """

    dim: int
    m_plus: np.ndarray
    m_minus: np.ndarray
    l_plus: np.ndarray
    l_minus: np.ndarray
    deg: np.ndarray
    n_agents: int

    @property
    def n_arcs(self) -> int:
        return self.m_plus.shape[1] // self.dim


def incidence_integer(topo: Topology) -> Tuple[np.ndarray, np.ndarray]:
    """Non-extended integer incidence matrices (N, |A|) of the bidirected graph."""
    arcs = topo.arcs
    m_plus = np.zeros((topo.n_agents, len(arcs)), dtype=np.int64)
    m_minus = np.zeros((topo.n_agents, len(arcs)), dtype=np.int64)
    for q, (i, j) in enumerate(arcs):
        m_plus[i, q] += 1
        m_plus[j, q] += 1
        m_minus[i, q] += 1
        m_minus[j, q] -= 1
    return m_plus, m_minus


def laplacians_integer(topo: Topology) -> Dict[str, np.ndarray]:
    """Signless/signed Laplacians and degree matrix built from adjacency, as integers."""
    n = topo.n_agents
    adjacency = np.zeros((n, n), dtype=np.int64)
    for i, j in topo.edges:
        adjacency[i, j] = adjacency[j, i] = 1
    degree = np.diag(topo.degrees)
    return {"l_plus": degree + adjacency, "l_minus": degree - adjacency, "deg": degree}


def extend_matrices(topo: Topology, d: int) -> ExtendedMatrices:
    """
    Build M+, M-, L+, L- and D extended by I_d.

    The Laplacians come from the adjacency/degree construction; their equality
    with half the incidence Gram matrices is checked by ``checks.laplacian_identities``.
    """
    if d < 1:
        raise ValueError("d must be a positive integer.")
    eye = np.eye(d, dtype=np.int64)
    m_plus, m_minus = incidence_integer(topo)
    lap = laplacians_integer(topo)
    return ExtendedMatrices(
        dim=d,
        m_plus=np.kron(m_plus, eye).astype(float),
        m_minus=np.kron(m_minus, eye).astype(float),
        l_plus=np.kron(lap["l_plus"], eye).astype(float),
        l_minus=np.kron(lap["l_minus"], eye).astype(float),
        deg=np.kron(lap["deg"], eye).astype(float),
        n_agents=topo.n_agents,
    )


@dataclass(frozen=True)
class SpectralConstants:
    """
    Singular values of the extended incidence matrices and tau_G.

    sigma_min_m_minus is the smallest nonzero singular value of M-.
    """

    sigma_max_m_plus: float
    sigma_min_m_minus: float
    sigma_max_m_minus: float
    tau_g: float
    lambda_max_l_plus: float
    lambda_min_l_minus: float

    @property
    def tau_g_from_laplacians(self) -> float:
        """tau_G = sqrt(sigma_max(L+) / sigma_min(L-))."""
        return float(np.sqrt(self.lambda_max_l_plus / self.lambda_min_l_minus))


def spectral_constants(mats: ExtendedMatrices) -> SpectralConstants:
    """
    Spectral constants from symmetric eigendecompositions of L+ and L-.

    Since L = M M^T / 2, sigma(M)^2 = 2 lambda(L).

    Raises:
        DisconnectedGraphError: If the eigenvalue following the d-dimensional
            consensus nullspace of L- is at most 1e-10.
    """
    d = mats.dim
    eig_minus = linalg.eigh(mats.l_minus, eigvals_only=True)
    eig_plus = linalg.eigh(mats.l_plus, eigvals_only=True)
    if mats.n_arcs == 0 or eig_minus.size <= d or eig_minus[d] <= CONNECTIVITY_TOL:
        fiedler = float(eig_minus[d]) if eig_minus.size > d else 0.0
        raise DisconnectedGraphError(
            f"Graph is not connected (second-smallest Laplacian eigenvalue {fiedler:.3e})."
        )
    lam_min_minus = float(eig_minus[d])
    lam_max_minus = float(eig_minus[-1])
    lam_max_plus = float(eig_plus[-1])
    sigma_max_plus = float(np.sqrt(2.0 * lam_max_plus))
    sigma_min_minus = float(np.sqrt(2.0 * lam_min_minus))
    return SpectralConstants(
        sigma_max_m_plus=sigma_max_plus,
        sigma_min_m_minus=sigma_min_minus,
        sigma_max_m_minus=float(np.sqrt(2.0 * lam_max_minus)),
        tau_g=sigma_max_plus / sigma_min_minus,
        lambda_max_l_plus=lam_max_plus,
        lambda_min_l_minus=lam_min_minus,
    )


def singular_value_constants(mats: ExtendedMatrices, tol: float = 1e-9) -> Tuple[float, float, float]:
    """(sigma_max(M+), sigma_min_nonzero(M-), sigma_max(M-)) directly from SVDs."""
    s_plus = np.linalg.svd(mats.m_plus, compute_uv=False)
    s_minus = np.linalg.svd(mats.m_minus, compute_uv=False)
    nonzero = s_minus[s_minus > tol]
    if nonzero.size == 0:
        raise DisconnectedGraphError("M- has no nonzero singular values.")
    return float(s_plus.max()), float(nonzero.min()), float(s_minus.max())


def mixing_matrix(topo: Topology) -> np.ndarray:
    """
    Metropolis-Hastings doubly stochastic mixing matrix.

    S_ij = 1 / (1 + max(N_i, N_j)) for neighbors, S_ii = 1 - sum_j S_ij.

    Example:
        >>> mixing_matrix(build_topology("no_edge", 3))
        array([[1., 0., 0.],
               [0., 1., 0.],
               [0., 0., 1.]])
    """
    n = topo.n_agents
    deg = topo.degrees
    s = np.zeros((n, n))
    for i, j in topo.edges:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        s[i, j] = s[j, i] = w
    for i in range(n):
        s[i, i] = 1.0 - sum(s[i, j] for j in topo.neighbors(i))
    return s


def describe(topo: Topology, d: Optional[int] = None) -> Dict[str, object]:
    """Short summary used in logs and reports."""
    info: Dict[str, object] = {
        "kind": topo.kind,
        "n_agents": topo.n_agents,
        "n_edges": len(topo.edges),
        "connected": topo.n_agents == 1 or topo.is_connected(),
    }
    if d is not None and info["connected"] and topo.edges:
        info["tau_g"] = spectral_constants(extend_matrices(topo, d)).tau_g
    return info

