"""Edge graphs via the first-order boundary operator.

Each patch graph is lifted to its line graph: edges become nodes, adjacent
when they share an endpoint.  The signed incidence matrix B1 (one -1 at the
low-index endpoint, one +1 at the high-index endpoint per column) yields the
first Hodge Laplacian L1 = B1^T B1 (the two-simplex term is zero here), and
edge features are filtered by a truncated Laguerre polynomial expansion of
L1 before being fused back into node embeddings as multiplicative gates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stedge.autodiff import Tensor, elu, logistic
from stedge.data import Window
from stedge.stgraph import UnifiedPatch


@dataclass(frozen=True)
class BoundaryOperator:
    """Signed node-edge incidence matrix with lexicographic edge order."""

    matrix: np.ndarray                       # (n_nodes, n_edges)
    edge_index: tuple[tuple[int, int], ...]  # (u, v) with u < v

    @property
    def n_edges(self) -> int:
        return len(self.edge_index)


@dataclass
class EdgeGraph:
    """Line graph of one patch: edge features, adjacency and Hodge Laplacian."""

    edge_index: tuple[tuple[int, int], ...]
    features: Tensor             # (n_edges, D_e)
    adjacency: np.ndarray        # line-graph adjacency
    laplacian: np.ndarray        # L1 = B1^T B1
    laplacian_scaled: np.ndarray


@dataclass
class LaguerreFilter:
    """Truncated Laguerre expansion: one coefficient matrix per order."""

    thetas: list[Tensor]

    @property
    def order(self) -> int:
        return len(self.thetas)

    def __post_init__(self):
        if not self.thetas:
            raise ValueError("filter order must be >= 1")


def boundary_operator(adjacency) -> BoundaryOperator:
    """Columns are the graph's undirected edges, oriented low -> high index."""
    a = np.asarray(adjacency)
    n = a.shape[0]
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if a[u, v] != 0]
    b1 = np.zeros((n, len(edges)))
    for e, (u, v) in enumerate(edges):
        b1[u, e] = -1.0
        b1[v, e] = 1.0
    return BoundaryOperator(matrix=b1, edge_index=tuple(edges))


def line_graph(edge_index) -> np.ndarray:
    """Adjacency of the edge graph: 1 iff two distinct edges share an endpoint."""
    m = len(edge_index)
    adj = np.zeros((m, m))
    for e in range(m):
        for f in range(e + 1, m):
            if set(edge_index[e]) & set(edge_index[f]):
                adj[e, f] = adj[f, e] = 1.0
    return adj


def hodge_laplacian(b1) -> np.ndarray:
    """L1 = B1^T B1; the B2 term is zero (no two-simplices are built)."""
    m = b1.matrix if isinstance(b1, BoundaryOperator) else np.asarray(b1)
    return m.T @ m


def scale_laplacian(l1: np.ndarray, power_iters: int = 50,
                    floor: float = 1e-6) -> tuple[np.ndarray, float]:
    """Rescale L1 by its largest eigenvalue (power iteration estimate).

    Laguerre polynomials grow quickly on large arguments, so the spectrum is
    squeezed into [0, 1] before filtering.  Deterministic start vector.
    """
    m = l1.shape[0]
    if m == 0:
        return l1.copy(), floor
    v = np.ones(m) + 1e-3 * np.arange(m)
    v /= np.linalg.norm(v)
    for _ in range(power_iters):
        w = l1 @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v = w / norm
    lam = max(float(v @ l1 @ v), floor)
    return l1 / lam, lam


def laguerre_scalars(lam: float, order: int) -> list[float]:
    """Laguerre polynomial values at a scalar, by the defining recurrence
    G_{j+1}(x) = ((2j + 1 - x) G_j(x) - j G_{j-1}(x)) / (j + 1),
    with G_0 = 1 and G_1 = 1 - x."""
    if order < 1:
        raise ValueError("order must be >= 1")
    vals = [1.0]
    if order > 1:
        vals.append(1.0 - lam)
    for j in range(1, order - 1):
        vals.append(((2 * j + 1 - lam) * vals[j] - j * vals[j - 1]) / (j + 1))
    return vals


def laguerre_basis(l1_scaled: np.ndarray, x: Tensor, order: int) -> list[Tensor]:
    """Apply the scalar recurrence to the operator: T_j = G_j(L1) X."""
    if order < 1:
        raise ValueError("order must be >= 1")
    lap = Tensor(l1_scaled)
    basis = [x]
    if order > 1:
        basis.append(x - lap @ x)
    for j in range(1, order - 1):
        t_j, t_prev = basis[j], basis[j - 1]
        t_next = (t_j * ((2 * j + 1) / (j + 1))
                  - (lap @ t_j) * (1.0 / (j + 1))
                  - t_prev * (j / (j + 1)))
        basis.append(t_next)
    return basis


def hll_conv(edge_graph: EdgeGraph, filt: LaguerreFilter) -> Tensor:
    """Spectral edge convolution: sum_j G_j(L1_scaled) E theta_j, then ELU."""
    basis = laguerre_basis(edge_graph.laplacian_scaled, edge_graph.features,
                           filt.order)
    out = basis[0] @ filt.thetas[0]
    for t_j, theta in zip(basis[1:], filt.thetas[1:]):
        out = out + t_j @ theta
    return elu(out)


def edge_distances(window: Window, patch: UnifiedPatch, edge_index) -> np.ndarray:
    """Euclidean distance between each edge's endpoint positions.

    Node (ped, local t) sits at the pedestrian's absolute observed position
    in the patch's time slot; distances are the raw geometric edge feature.
    """
    pos = window.obs[:, patch.start:patch.start + patch.length, :].reshape(-1, 2)
    if not edge_index:
        return np.zeros(0)
    idx = np.asarray(edge_index)
    return np.linalg.norm(pos[idx[:, 0]] - pos[idx[:, 1]], axis=-1)


def build_edge_graph(window: Window, patch: UnifiedPatch, w_embed: Tensor,
                     boundary: BoundaryOperator | None = None,
                     rescale: bool = True) -> EdgeGraph:
    boundary = boundary or boundary_operator(patch.adjacency)
    l1 = hodge_laplacian(boundary)
    scaled = scale_laplacian(l1)[0] if rescale else l1.copy()
    dists = edge_distances(window, patch, boundary.edge_index)
    features = Tensor(dists[:, None]) @ w_embed
    return EdgeGraph(edge_index=boundary.edge_index, features=features,
                     adjacency=line_graph(boundary.edge_index),
                     laplacian=l1, laplacian_scaled=scaled)


def edge_selectors(edge_index, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """One-hot matrices picking each edge's low / high endpoint row."""
    m = len(edge_index)
    s_u = np.zeros((m, n_nodes))
    s_v = np.zeros((m, n_nodes))
    for e, (u, v) in enumerate(edge_index):
        s_u[e, u] = 1.0
        s_v[e, v] = 1.0
    return s_u, s_v


def fusion_gcn(h_node: Tensor, h_edge: Tensor | None, edge_index,
               theta: Tensor, phi: Tensor, gate_mode: str = "vector",
               selectors: tuple[np.ndarray, np.ndarray] | None = None) -> Tensor:
    """Node update gated per neighbour by its edge embedding.

    H_i = ELU(theta h_i + sum_{j in N(i)} gate(e_ij) * theta h_j), where the
    gate is a logistic squash of the edge embedding mapped through ``phi``
    (per-channel in "vector" mode, a single scalar per edge in "scalar"
    mode, identically zero in "zero" mode, which severs the edge branch).
    """
    if gate_mode not in ("vector", "scalar", "zero"):
        raise ValueError(f"unknown gate mode {gate_mode!r}")
    t = h_node @ theta
    if h_edge is None or not len(edge_index) or gate_mode == "zero":
        return elu(t)
    gate = logistic(h_edge @ phi)   # (|E|, d) or (|E|, 1), broadcast over channels
    s_u, s_v = selectors if selectors is not None else edge_selectors(
        edge_index, h_node.shape[0])
    from_v = Tensor(s_u.T) @ (gate * (Tensor(s_v) @ t))
    from_u = Tensor(s_v.T) @ (gate * (Tensor(s_u) @ t))
    return elu(t + from_v + from_u)
