"""End-to-end wiring: features -> unified patch graphs -> edge-enhanced
fusion -> encoder tokens -> bivariate Gaussian forecasts.

The three motion embeddings are each ``model_dim`` wide, so the concatenated
feature width is 3*model_dim and a learned projection brings it back to
``model_dim`` before the graph stage.  Graph structure (adjacency, boundary
operator, scaled Hodge Laplacian, fusion selectors) depends only on the
pedestrian count when patches are complete graphs, so it is cached per N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from stedge.autodiff import ParameterStore, ShapeMismatchError, Tensor
from stedge.data import Window, future_displacements, init_features
from stedge.edgegraph import (
    BoundaryOperator,
    EdgeGraph,
    LaguerreFilter,
    boundary_operator,
    edge_distances,
    edge_selectors,
    fusion_gcn,
    hll_conv,
    hodge_laplacian,
    line_graph,
    scale_laplacian,
)
from stedge.predictor import (
    EncoderConfig,
    GaussianTrack,
    assemble_tokens,
    bivariate_nll,
    encoder_forward,
    gaussian_parameters,
    stack_and_pool,
    track_from_tensors,
)
from stedge.stgraph import PatchingConfig, gat_layer, patch_count, segment_patches

_STREAM_INIT = 0


@dataclass(frozen=True)
class ModelConfig:
    t_obs: int = 8
    t_pred: int = 12
    patch_len: int = 3
    patch_stride: int = 1
    model_dim: int = 128
    encoder_dim: int = 256
    encoder_heads: int = 4
    encoder_layers: int = 2
    hll_order: int = 3
    hll_rescale: bool = True
    fusion_gate: str = "vector"     # vector | scalar | zero
    endpoint_mode: str = "off"      # off | last_velocity | oracle_gt
    max_distance: float | None = None

    @property
    def n_patches(self) -> int:
        return patch_count(self.t_obs, self.patching())

    @property
    def token_len(self) -> int:
        return self.n_patches + self.t_pred

    def patching(self) -> PatchingConfig:
        return PatchingConfig(self.patch_len, self.patch_stride)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(layers=self.encoder_layers, heads=self.encoder_heads,
                             model_dim=self.encoder_dim,
                             ffn_dim=2 * self.encoder_dim)


def _glorot(rng, shape) -> np.ndarray:
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[-1] if len(shape) > 1 else 1
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_parameters(cfg: ModelConfig, seed: int = 0) -> ParameterStore:
    """Seeded parameter store; declaration order fixes the checkpoint layout."""
    rng = np.random.default_rng([seed, _STREAM_INIT])
    m, e = cfg.model_dim, cfg.encoder_dim
    store = ParameterStore()
    store.add("feat.w_v", _glorot(rng, (2, m)))
    store.add("feat.w_norm", _glorot(rng, (1, m)))
    store.add("feat.w_angle", _glorot(rng, (1, m)))
    store.add("feat.w_proj", _glorot(rng, (3 * m, m)))
    store.add("gat.theta", _glorot(rng, (m, m)))
    store.add("gat.theta_dst", _glorot(rng, (m, m)))
    store.add("gat.att", _glorot(rng, (m,)))
    store.add("edge.w_embed", _glorot(rng, (1, m)))
    for j in range(cfg.hll_order):
        store.add(f"hll.theta{j}", _glorot(rng, (m, m)))
    store.add("fuse.theta", _glorot(rng, (m, m)))
    phi_shape = (m, 1) if cfg.fusion_gate == "scalar" else (m, m)
    store.add("fuse.phi", _glorot(rng, phi_shape))
    store.add("pred.placeholder", rng.normal(0.0, 0.5, size=(cfg.t_pred, m)))
    store.add("pred.positional", rng.normal(0.0, 0.5, size=(cfg.token_len, m)))
    store.add("enc.in_w", _glorot(rng, (m, e)))
    store.add("enc.in_b", np.zeros(e))
    for i in range(cfg.encoder_layers):
        lp = f"enc.l{i}"
        for name in ("q", "k", "v", "o"):
            store.add(f"{lp}.att.w{name}", _glorot(rng, (e, e)))
            if name != "k":  # key bias would be dead under the softmax
                store.add(f"{lp}.att.b{name}", np.zeros(e))
        store.add(f"{lp}.ln1.g", np.ones(e))
        store.add(f"{lp}.ln1.b", np.zeros(e))
        store.add(f"{lp}.ffn.w1", _glorot(rng, (e, 2 * e)))
        store.add(f"{lp}.ffn.b1", np.zeros(2 * e))
        store.add(f"{lp}.ffn.w2", _glorot(rng, (2 * e, e)))
        store.add(f"{lp}.ffn.b2", np.zeros(e))
        store.add(f"{lp}.ln2.g", np.ones(e))
        store.add(f"{lp}.ln2.b", np.zeros(e))
    store.add("head.w", _glorot(rng, (e, 5)))
    store.add("head.b", np.zeros(5))
    return store


@dataclass
class _PatchStructure:
    """Constant per-patch graph machinery; reused across patches/windows."""

    boundary: BoundaryOperator
    laplacian: np.ndarray
    laplacian_scaled: np.ndarray
    line_adjacency: np.ndarray
    selectors: tuple[np.ndarray, np.ndarray]


class TrajectoryForecaster:
    """The full pipeline behind one parameter store."""

    def __init__(self, cfg: ModelConfig, params: ParameterStore | None = None,
                 seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_parameters(cfg, seed)
        self._structures: dict[int, _PatchStructure] = {}

    # -- structure ---------------------------------------------------------

    def _structure_for(self, adjacency: np.ndarray) -> _PatchStructure:
        boundary = boundary_operator(adjacency)
        l1 = hodge_laplacian(boundary)
        scaled = scale_laplacian(l1)[0] if self.cfg.hll_rescale else l1.copy()
        return _PatchStructure(
            boundary=boundary, laplacian=l1, laplacian_scaled=scaled,
            line_adjacency=line_graph(boundary.edge_index),
            selectors=edge_selectors(boundary.edge_index, adjacency.shape[0]))

    def _cached_structure(self, patch) -> _PatchStructure:
        if self.cfg.max_distance is not None:
            return self._structure_for(patch.adjacency)  # position-dependent
        struct = self._structures.get(patch.n_peds)
        if struct is None:
            struct = self._structure_for(patch.adjacency)
            self._structures[patch.n_peds] = struct
        return struct

    # -- forward -----------------------------------------------------------

    def forward(self, window: Window, return_attention: bool = False):
        cfg = self.cfg
        if window.t_obs != cfg.t_obs or window.t_pred != cfg.t_pred:
            raise ShapeMismatchError(
                f"window horizons ({window.t_obs}, {window.t_pred}) != "
                f"configured ({cfg.t_obs}, {cfg.t_pred})")
        params = self.params
        feats = init_features(window, params, cfg.endpoint_mode)
        x = feats @ params["feat.w_proj"]
        patches = segment_patches(x, cfg.patching(), positions=window.obs,
                                  max_distance=cfg.max_distance)

        filt = LaguerreFilter([params[f"hll.theta{j}"]
                               for j in range(cfg.hll_order)])
        fused = []
        for patch in patches:
            struct = self._cached_structure(patch)
            h_node = gat_layer(patch, params["gat.theta"],
                               params["gat.theta_dst"], params["gat.att"])
            h_edge = None
            if struct.boundary.n_edges and cfg.fusion_gate != "zero":
                dists = edge_distances(window, patch, struct.boundary.edge_index)
                e_feat = Tensor(dists[:, None]) @ params["edge.w_embed"]
                graph = EdgeGraph(edge_index=struct.boundary.edge_index,
                                  features=e_feat,
                                  adjacency=struct.line_adjacency,
                                  laplacian=struct.laplacian,
                                  laplacian_scaled=struct.laplacian_scaled)
                h_edge = hll_conv(graph, filt)
            fused.append(fusion_gcn(h_node, h_edge, struct.boundary.edge_index,
                                    params["fuse.theta"], params["fuse.phi"],
                                    gate_mode=cfg.fusion_gate,
                                    selectors=struct.selectors))

        pooled = stack_and_pool(fused, window.n_peds, cfg.patch_len)
        tokens = assemble_tokens(pooled, params["pred.placeholder"],
                                 params["pred.positional"])
        enc_in = tokens @ params["enc.in_w"] + params["enc.in_b"]
        result = encoder_forward(enc_in, cfg.encoder_config(), params,
                                 return_attention=return_attention)
        y_repr, attentions = result if return_attention else (result, None)
        mu, log_sigma, rho = gaussian_parameters(
            y_repr, params["head.w"], params["head.b"], cfg.t_pred)
        if return_attention:
            return mu, log_sigma, rho, attentions
        return mu, log_sigma, rho

    def loss(self, window: Window) -> Tensor:
        mu, log_sigma, rho = self.forward(window)
        return bivariate_nll(mu, log_sigma, rho, future_displacements(window))

    def predict(self, window: Window) -> GaussianTrack:
        mu, log_sigma, rho = self.forward(window)
        return track_from_tensors(mu, log_sigma, rho, window.origin,
                                  window.ped_ids)
