"""Token assembly, the transformer encoder, the bivariate Gaussian head,
and trajectory sampling.

Per-patch node embeddings are pooled over each pedestrian's L time slots
into K historical tokens; a shared learnable placeholder supplies the
T_pred future tokens, a learnable positional table is added to the whole
concatenated sequence, and a standard post-norm encoder attends over all
K + T_pred positions per pedestrian (no cross-pedestrian attention; social
mixing already happened in the graph stage).  Only the last T_pred outputs
feed the Gaussian head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from stedge.autodiff import (
    ParameterStore,
    ShapeMismatchError,
    Tensor,
    concatenate,
    exp,
    leaky_relu,
    log,
    softmax,
    tanh,
)

LOG_TWO_PI = math.log(2.0 * math.pi)
RHO_BOUND = 0.999  # smooth clamp: rho = 0.999 * tanh(raw)

_STREAM_SAMPLING = 2  # sub-stream tag under the master seed


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    heads: int = 4
    model_dim: int = 256
    ffn_dim: int = 512

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if self.layers < 1:
            raise ValueError("encoder needs at least one layer")


@dataclass
class GaussianTrack:
    """Per-pedestrian, per-step bivariate Gaussian forecast parameters."""

    mu: np.ndarray       # (N, T_pred, 2) relative displacement means
    sigma: np.ndarray    # (N, T_pred, 2) strictly positive
    rho: np.ndarray      # (N, T_pred) in (-1, 1)
    origin: np.ndarray   # (N, 2) last observed absolute position
    ped_ids: list[int]

    def __post_init__(self):
        if np.any(self.sigma <= 0.0):
            raise ValueError("sigma must be strictly positive")
        if np.any(np.abs(self.rho) >= 1.0):
            raise ValueError("|rho| must be < 1")


def stack_and_pool(patch_embeddings: list[Tensor], n_peds: int,
                   length: int) -> Tensor:
    """Mean-pool each pedestrian's L node embeddings per patch -> (N, K, D).

    Relies on the pedestrian-major node order: rows [p*L, (p+1)*L) belong to
    pedestrian p, so pooling is a contiguous-stride mean.
    """
    tokens = []
    for h in patch_embeddings:
        if h.shape[0] != n_peds * length:
            raise ShapeMismatchError(
                f"patch embedding rows {h.shape[0]} != n_peds*length "
                f"{n_peds * length}")
        d = h.shape[1]
        tokens.append(h.reshape((n_peds, length, d)).mean(axis=1, keepdims=True))
    return concatenate(tokens, axis=1)


def assemble_tokens(hist: Tensor, placeholder: Tensor,
                    positional: Tensor) -> Tensor:
    """Concatenate history with broadcast placeholder rows, add positions.

    The placeholder table (T_pred, D) is shared across pedestrians; the
    positional table (K + T_pred, D) is added to every pedestrian's full
    sequence.
    """
    n, k, d = hist.shape
    t_pred = placeholder.shape[0]
    if positional.shape != (k + t_pred, d):
        raise ShapeMismatchError(
            f"positional table {positional.shape} != {(k + t_pred, d)}")
    fut = Tensor(np.zeros((n, t_pred, d))) + placeholder.reshape((1, t_pred, d))
    return concatenate([hist, fut], axis=1) + positional


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    centered = x - x.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = exp(log(var + eps) * -0.5)
    return centered * inv_std * gain + bias


def multi_head_attention(x: Tensor, params: ParameterStore, prefix: str,
                         heads: int):
    """Full (non-causal) scaled dot-product attention per pedestrian."""
    n, t, e = x.shape
    dh = e // heads

    def project(name, bias=True):
        y = x @ params[f"{prefix}.w{name}"]
        if bias:
            y = y + params[f"{prefix}.b{name}"]
        return y.reshape((n, t, heads, dh)).transpose((0, 2, 1, 3))

    # no key bias: a shared key offset shifts every logit of a query's row
    # equally, which the softmax cancels, so the parameter would be dead
    q, k, v = project("q"), project("k", bias=False), project("v")
    scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    alpha = softmax(scores)                    # (n, heads, t, t)
    ctx = (alpha @ v).transpose((0, 2, 1, 3)).reshape((n, t, e))
    out = ctx @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]
    return out, alpha


def encoder_forward(tokens: Tensor, cfg: EncoderConfig, params: ParameterStore,
                    prefix: str = "enc", return_attention: bool = False):
    """Post-norm encoder stack; attention is temporal only (batch axis = N)."""
    if tokens.shape[-1] != cfg.model_dim:
        raise ShapeMismatchError(
            f"tokens width {tokens.shape[-1]} != encoder dim {cfg.model_dim}")
    x = tokens
    attentions = []
    for i in range(cfg.layers):
        lp = f"{prefix}.l{i}"
        attn, alpha = multi_head_attention(x, params, f"{lp}.att", cfg.heads)
        attentions.append(alpha)
        x = layer_norm(x + attn, params[f"{lp}.ln1.g"], params[f"{lp}.ln1.b"])
        ff = leaky_relu(x @ params[f"{lp}.ffn.w1"] + params[f"{lp}.ffn.b1"], 0.0)
        ff = ff @ params[f"{lp}.ffn.w2"] + params[f"{lp}.ffn.b2"]
        x = layer_norm(x + ff, params[f"{lp}.ln2.g"], params[f"{lp}.ln2.b"])
    return (x, attentions) if return_attention else x


def gaussian_parameters(y_repr: Tensor, head_w: Tensor, head_b: Tensor,
                        t_pred: int):
    """Project the last T_pred positions to (mu, log_sigma, rho) tensors."""
    raw = y_repr[:, -t_pred:, :] @ head_w + head_b
    mu = raw[..., 0:2]
    log_sigma = raw[..., 2:4]
    rho = tanh(raw[..., 4:5]) * RHO_BOUND
    return mu, log_sigma, rho


def bivariate_nll(mu: Tensor, log_sigma: Tensor, rho: Tensor,
                  targets) -> Tensor:
    """Mean negative log density of per-step displacement targets.

    Computed fully in log space: 1/sigma and 1/(1 - rho^2) enter as
    exp(-log u), so the guard against non-finite values never fires on
    valid parameters.
    """
    t = Tensor(np.asarray(targets, dtype=np.float64))
    if t.shape != mu.shape:
        raise ShapeMismatchError(f"targets {t.shape} != mu {mu.shape}")
    sx, sy = log_sigma[..., 0:1], log_sigma[..., 1:2]
    ex = (t[..., 0:1] - mu[..., 0:1]) * exp(-sx)
    ey = (t[..., 1:2] - mu[..., 1:2]) * exp(-sy)
    log_u = log(1.0 - rho * rho)
    quad = (ex * ex + ey * ey - (rho * ex * ey) * 2.0) * exp(-log_u) * 0.5
    nll = LOG_TWO_PI + sx + sy + log_u * 0.5 + quad
    return nll.mean()


def gaussian_head_and_loss(y_repr: Tensor, targets, head_w: Tensor,
                           head_b: Tensor, t_pred: int) -> Tensor:
    mu, log_sigma, rho = gaussian_parameters(y_repr, head_w, head_b, t_pred)
    return bivariate_nll(mu, log_sigma, rho, targets)


def track_from_tensors(mu: Tensor, log_sigma: Tensor, rho: Tensor,
                       origin: np.ndarray, ped_ids: list[int]) -> GaussianTrack:
    return GaussianTrack(mu=mu.data.copy(),
                         sigma=np.exp(log_sigma.data),
                         rho=rho.data[..., 0].copy(),
                         origin=np.asarray(origin, dtype=np.float64).copy(),
                         ped_ids=list(ped_ids))


def sample_trajectories(track: GaussianTrack, count: int = 20,
                        seed=0) -> np.ndarray:
    """Draw ``count`` absolute trajectories, (count, N, T_pred, 2).

    Each sample uses an independent stream derived from (seed, sample
    index), so samples are reproducible and order-independent.  Per step,
    the 2x2 Cholesky factor of the covariance maps unit normals to
    displacements, which cumulative-sum from each pedestrian's origin.
    """
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    n, t_pred = track.mu.shape[:2]
    sx, sy = track.sigma[..., 0], track.sigma[..., 1]
    rho = track.rho
    out = np.empty((count, n, t_pred, 2))
    for s in range(count):
        rng = np.random.default_rng(base + [s])
        z = rng.standard_normal((n, t_pred, 2))
        dx = track.mu[..., 0] + sx * z[..., 0]
        dy = track.mu[..., 1] + sy * (rho * z[..., 0]
                                      + np.sqrt(1.0 - rho * rho) * z[..., 1])
        steps = np.stack([dx, dy], axis=-1)
        out[s] = track.origin[:, None, :] + np.cumsum(steps, axis=1)
    return out
