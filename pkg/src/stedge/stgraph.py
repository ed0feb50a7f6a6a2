"""Unified spatial-temporal patch graphs.

Observed features are segmented into K overlapping length-L patches; each
patch becomes one graph whose nodes are (pedestrian, time-slot) pairs in
pedestrian-major order, so cross-time interaction is a single hop.  Node
embeddings come from a single attention layer; effective resistance via the
Laplacian pseudoinverse quantifies how much the dense patch wiring eases
message passing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stedge.autodiff import Tensor, elu, leaky_relu, softmax

_NEG_INF = 1e30  # added with weight -1 to logits of non-neighbours


class PatchTooLongError(ValueError):
    """Patch length exceeds the observed horizon."""


class DisconnectedGraphError(ValueError):
    """The queried nodes lie in different connected components."""


@dataclass(frozen=True)
class PatchingConfig:
    length: int = 3
    stride: int = 1

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("patch length must be >= 1")
        if self.stride < 1:
            raise ValueError("patch stride must be >= 1")


@dataclass
class UnifiedPatch:
    """One patch graph: node features plus 0/1 adjacency (zero diagonal).

    Node index = ped * length + local_time; self-loops are not stored, the
    attention layer adds them.
    """

    index: int          # 1-based patch number
    start: int          # first observed time slot covered
    n_peds: int
    length: int
    features: Tensor    # (n_peds * length, D)
    adjacency: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.n_peds * self.length


def patch_count(t_obs: int, cfg: PatchingConfig) -> int:
    """K = floor((T_obs - L) / S) + 1."""
    if cfg.length > t_obs:
        raise PatchTooLongError(f"patch length {cfg.length} > horizon {t_obs}")
    return (t_obs - cfg.length) // cfg.stride + 1


def patch_starts(t_obs: int, cfg: PatchingConfig) -> list[int]:
    return [k * cfg.stride for k in range(patch_count(t_obs, cfg))]


def build_node_adjacency(n_peds: int, length: int, positions=None,
                         max_distance: float | None = None) -> np.ndarray:
    """Adjacency over the patch's n_peds*length nodes, zero diagonal.

    Default is the complete graph: every (ped, time) pair is one hop from
    every other.  With ``max_distance`` set, cross-pedestrian links are kept
    only within that Euclidean range (same-pedestrian links always stay, and
    any node left isolated is tied to its nearest neighbour so degree >= 1).
    """
    n = n_peds * length
    adj = np.ones((n, n)) - np.eye(n)
    if max_distance is None or n <= 1:
        return adj
    if positions is None:
        raise ValueError("max_distance thresholding needs node positions")
    positions = np.asarray(positions, dtype=np.float64)
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    ped_of = np.arange(n) // length
    same_ped = ped_of[:, None] == ped_of[None, :]
    adj *= (same_ped | (dist <= max_distance)).astype(float)
    for i in np.flatnonzero(adj.sum(axis=1) == 0):
        d = dist[i].copy()
        d[i] = np.inf
        j = int(np.argmin(d))
        adj[i, j] = adj[j, i] = 1.0
    return adj


def segment_patches(features: Tensor, cfg: PatchingConfig,
                    positions: np.ndarray | None = None,
                    max_distance: float | None = None) -> list[UnifiedPatch]:
    """Slice (N, T_obs, D) features into K patch graphs.

    Patch k (1-based) covers time slots [(k-1)*stride, (k-1)*stride + length);
    its feature matrix is the pedestrian-major flattening of that slice.
    """
    n_peds, t_obs = features.shape[0], features.shape[1]
    patches = []
    for k, start in enumerate(patch_starts(t_obs, cfg), start=1):
        block = features[:, start:start + cfg.length, :]
        z = block.reshape((n_peds * cfg.length, features.shape[2]))
        pos = None
        if positions is not None:
            pos = np.asarray(positions)[:, start:start + cfg.length, :].reshape(-1, 2)
        adj = build_node_adjacency(n_peds, cfg.length, pos, max_distance)
        patches.append(UnifiedPatch(index=k, start=start, n_peds=n_peds,
                                    length=cfg.length, features=z, adjacency=adj))
    return patches


def gat_layer(patch: UnifiedPatch, theta: Tensor, theta_dst: Tensor,
              att: Tensor, negative_slope: float = 0.2,
              return_attention: bool = False):
    """Single-head graph attention over a patch.

    The pair transform acts on the concatenated node pair as two blocks,
    logit(i, j) = a . LeakyReLU(theta_dst z_i + theta z_j), with the
    rectifier inside on the summed pair.  Acting on the sum is what keeps
    attention input-dependent: with a per-node rectifier the receiver term
    would be row-constant and the softmax would cancel it.  The softmax runs
    over each node's neighbours plus itself; messages are theta z_j and the
    aggregate passes through an exponential-linear unit.
    """
    n = patch.n_nodes
    src = patch.features @ theta        # messages and attention source half
    dst = patch.features @ theta_dst    # attention receiver half
    d = src.shape[1]
    if att.size != d:
        raise ValueError(f"attention vector has {att.size} entries, expected {d}")
    pair = dst.reshape((n, 1, d)) + src.reshape((1, n, d))
    act = leaky_relu(pair, negative_slope)
    logits = (act @ att.reshape((d, 1))).reshape((n, n))
    mask = patch.adjacency + np.eye(n)
    logits = logits + Tensor((mask - 1.0) * _NEG_INF)
    alpha = softmax(logits)
    out = elu(alpha @ src)
    return (out, alpha) if return_attention else out


# -- effective resistance -----------------------------------------------------


def _check_adjacency(adjacency) -> np.ndarray:
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("adjacency must be symmetric")
    return a


def graph_laplacian(adjacency) -> np.ndarray:
    a = _check_adjacency(adjacency)
    return np.diag(a.sum(axis=1)) - a


def laplacian_pinv(adjacency, rel_tol: float = 1e-9) -> np.ndarray:
    """Moore-Penrose pseudoinverse of the graph Laplacian.

    Eigenvalues below rel_tol * lambda_max are the (near-)null space of a
    connected graph and invert to zero.
    """
    lap = graph_laplacian(adjacency)
    w, v = np.linalg.eigh(lap)
    lam_max = float(w.max(initial=0.0))
    if lam_max <= 0.0:
        return np.zeros_like(lap)
    inv = np.where(np.abs(w) < rel_tol * lam_max, 0.0,
                   1.0 / np.where(np.abs(w) < rel_tol * lam_max, 1.0, w))
    return (v * inv) @ v.T


def _same_component(a: np.ndarray, i: int, j: int) -> bool:
    n = len(a)
    seen = np.zeros(n, dtype=bool)
    frontier = [i]
    seen[i] = True
    while frontier:
        u = frontier.pop()
        for w in np.flatnonzero(a[u] != 0.0):
            if not seen[w]:
                seen[w] = True
                frontier.append(int(w))
    return bool(seen[j])


def effective_resistance(adjacency, i: int, j: int) -> float:
    """R_ij = (e_i - e_j)^T L^+ (e_i - e_j) on a connected node pair."""
    a = _check_adjacency(adjacency)
    n = len(a)
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node pair ({i}, {j}) outside graph of {n} nodes")
    if i == j:
        return 0.0
    if not _same_component(a, i, j):
        raise DisconnectedGraphError(
            f"nodes {i} and {j} are in different components (infinite resistance)")
    lp = laplacian_pinv(a)
    e = np.zeros(n)
    e[i], e[j] = 1.0, -1.0
    return float(e @ lp @ e)


def resistance_matrix(adjacency) -> np.ndarray:
    """All-pairs effective resistance of a connected graph."""
    lp = laplacian_pinv(adjacency)
    d = np.diag(lp)
    return d[:, None] + d[None, :] - 2.0 * lp
