"""Leader-follower communication topology and its derived spectral quantities.

Node 0 is always the leader.  Entry ``a[i, j]`` of the adjacency matrix is the
weight of the edge carrying information from node j to node i, so a
leader-rooted graph has an all-zero leader row.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import (
    EigenFailureError,
    GraphShapeError,
    LeaderInEdgeError,
    NegativeWeightError,
)

log = logging.getLogger(__name__)

_SYM_TOL = 1e-12


@dataclass(frozen=True)
class NetworkGraph:
    """Weighted topology over one leader and N followers.

    Attributes:
        adjacency: (N+1)x(N+1) nonnegative weight matrix, zero diagonal.
        laplacian: L = D - A with D the diagonal in-degree matrix.
        l_ff: NxN follower block of the Laplacian.
        l_fl: Nx1 leader column block of the Laplacian.
        degrees: per-node weighted in-degree d_i = sum_j a_ij.
        z: max over followers of the follower-only degree sum_{j>=1} a_ij.
    """

    adjacency: np.ndarray
    laplacian: np.ndarray
    l_ff: np.ndarray
    l_fl: np.ndarray
    degrees: np.ndarray
    z: float

    @property
    def n_followers(self) -> int:
        return self.adjacency.shape[0] - 1

    def follower_adjacency(self) -> np.ndarray:
        return self.adjacency[1:, 1:]


@dataclass(frozen=True)
class WeightedGraphMatrix:
    """Degree-normalized follower Laplacian (I + D_ff)^-1 L_ff and its spectrum.

    For any graph the spectrum lies in the closed unit disc centered at 1.
    ``is_real`` marks spectra computed through the symmetric similarity
    transform available when the follower subgraph is undirected.
    """

    l_bar: np.ndarray
    eigenvalues: np.ndarray
    is_real: bool


@dataclass(frozen=True)
class RowStochasticDff:
    """Row-stochastic follower averaging matrix with entries a_ij / (1 + z).

    ``mu`` is the largest modulus among its eigenvalues after removing one
    eigenvalue at 1 (the all-ones direction).  With a single follower and no
    follower-follower edges there is nothing left to average; ``degenerate``
    is set and mu is reported as 1.
    """

    d_ff: np.ndarray
    mu: float
    degenerate: bool


def build_graph(weights, leader_root: bool = True) -> NetworkGraph:
    """Validate an adjacency matrix and derive the Laplacian blocks.

    Raises GraphShapeError, NegativeWeightError, or LeaderInEdgeError when
    ``leader_root`` is requested but row 0 has a positive entry.
    """
    a = np.array(weights, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphShapeError(f"adjacency must be square, got shape {a.shape}")
    if a.shape[0] < 2:
        raise GraphShapeError("graph needs a leader and at least one follower")
    if np.any(np.diag(a) != 0):
        raise GraphShapeError("adjacency diagonal must be zero")
    if np.any(a < 0):
        raise NegativeWeightError("adjacency weights must be nonnegative")
    if leader_root and np.any(a[0] > 0):
        raise LeaderInEdgeError("leader row must be zero in a leader-rooted graph")

    degrees = a.sum(axis=1)
    lap = np.diag(degrees) - a
    return NetworkGraph(
        adjacency=a,
        laplacian=lap,
        l_ff=lap[1:, 1:],
        l_fl=lap[1:, :1],
        degrees=degrees,
        z=float(a[1:, 1:].sum(axis=1).max()),
    )


def graph_from_edges(n_nodes: int, edges, undirected_followers: bool = True,
                     leader_root: bool = True) -> NetworkGraph:
    """Build a graph from ``[from, to, weight]`` triples.

    An edge (j, i, w) lets node i hear node j, i.e. sets a[i, j] = w.  With
    ``undirected_followers`` every follower-follower edge is mirrored.
    """
    a = np.zeros((n_nodes, n_nodes))
    for src, dst, w in edges:
        src, dst = int(src), int(dst)
        a[dst, src] = float(w)
        if undirected_followers and src >= 1 and dst >= 1:
            a[src, dst] = float(w)
    return build_graph(a, leader_root=leader_root)


def has_leader_spanning_tree(g: NetworkGraph) -> bool:
    """True iff every follower is reachable from the leader along directed edges."""
    n = g.adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        j = queue.popleft()
        # node i hears node j when a[i, j] > 0
        for i in np.flatnonzero(g.adjacency[:, j] > 0):
            if not seen[i]:
                seen[i] = True
                queue.append(i)
    return bool(seen.all())


def follower_subgraph_is_undirected(g: NetworkGraph) -> bool:
    a_ff = g.follower_adjacency()
    return bool(np.allclose(a_ff, a_ff.T, atol=_SYM_TOL))


def weighted_graph_matrix(g: NetworkGraph) -> WeightedGraphMatrix:
    """Compute (I + D_ff)^-1 L_ff and its eigenvalues.

    Undirected follower subgraphs go through the symmetric similarity
    (I + D_ff)^(-1/2) L_ff (I + D_ff)^(-1/2), which guarantees a real
    spectrum.  Directed subgraphs fall back to a general eigensolver.
    """
    d = g.degrees[1:]
    scale = 1.0 / (1.0 + d)
    l_bar = scale[:, None] * g.l_ff
    try:
        if follower_subgraph_is_undirected(g):
            half = np.sqrt(scale)
            sym = half[:, None] * g.l_ff * half[None, :]
            eigs = np.linalg.eigvalsh(sym)
            return WeightedGraphMatrix(l_bar=l_bar, eigenvalues=eigs, is_real=True)
        eigs = np.linalg.eigvals(l_bar)
        return WeightedGraphMatrix(l_bar=l_bar, eigenvalues=eigs, is_real=False)
    except np.linalg.LinAlgError as exc:
        raise EigenFailureError(f"eigendecomposition failed: {exc}") from exc


def row_stochastic_dff(g: NetworkGraph) -> RowStochasticDff:
    """Build the (1 + z)-normalized follower averaging matrix and its mu."""
    a_ff = g.follower_adjacency()
    n = a_ff.shape[0]
    d_ff = a_ff / (1.0 + g.z)
    np.fill_diagonal(d_ff, 1.0 - a_ff.sum(axis=1) / (1.0 + g.z))

    if n == 1 and g.z == 0:
        return RowStochasticDff(d_ff=d_ff, mu=1.0, degenerate=True)

    if np.allclose(a_ff, a_ff.T, atol=_SYM_TOL):
        eigs = np.linalg.eigvalsh(d_ff).astype(complex)
    else:
        eigs = np.linalg.eigvals(d_ff)
    # drop exactly one eigenvalue at (or closest to) 1; ties broken by the
    # larger real part so a repeated dominant pair sheds its rightmost member
    dist = np.abs(eigs - 1.0)
    order = np.lexsort((-eigs.real, dist))
    rest = np.delete(eigs, order[0])
    mu = float(np.abs(rest).max()) if rest.size else 1.0
    if mu >= 1.0:
        log.warning("sub-dominant modulus %.6f >= 1; follower subgraph is "
                    "likely disconnected, gain averaging will not contract", mu)
    return RowStochasticDff(d_ff=d_ff, mu=mu, degenerate=False)
