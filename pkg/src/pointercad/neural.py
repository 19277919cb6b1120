"""Reference numerics for the B-rep graph network and the two training losses.

Everything here works on small dense float64 arrays.  Only the losses carry
analytic gradients; :func:`grad_check` compares them with central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

FEATURE_DIM = 128
HEADS = 8


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def silu(x):
    return x / (1.0 + np.exp(-x))


ACTIVATIONS = {"silu": silu, "identity": lambda x: x}


@dataclass
class Linear:
    W: np.ndarray  # (d_in, d_out)
    b: np.ndarray | None = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.W.shape[0]:
            raise ShapeError(f"linear layer expects {self.W.shape[0]} features, got {x.shape[-1]}")
        y = x @ self.W
        return y if self.b is None else y + self.b


@dataclass
class Mlp:
    """Two linear layers with an activation in between and none at the end."""

    first: Linear
    second: Linear
    activation: str = "silu"

    def __call__(self, x):
        return self.second(ACTIVATIONS[self.activation](self.first(x)))


@dataclass
class MhaParams:
    Wq: np.ndarray
    Wk: np.ndarray
    Wv: np.ndarray
    Wo: np.ndarray
    heads: int = HEADS


def _softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def mha(Q, K, V, params: MhaParams) -> np.ndarray:
    """Multi-head scaled dot-product attention, concatenated and output-projected."""
    Q, K, V = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (Q, K, V))
    d = Q.shape[-1]
    if K.shape[-1] != d or V.shape[-1] != d or K.shape[0] != V.shape[0]:
        raise ShapeError(f"incompatible attention shapes {Q.shape}, {K.shape}, {V.shape}")
    for name in ("Wq", "Wk", "Wv", "Wo"):
        if getattr(params, name).shape != (d, d):
            raise ShapeError(f"{name} must be {d}x{d}")
    h = params.heads
    if h < 1 or d % h:
        raise ShapeError(f"{h} heads do not divide feature dimension {d}")
    dh = d // h
    q = (Q @ params.Wq).reshape(len(Q), h, dh).transpose(1, 0, 2)
    k = (K @ params.Wk).reshape(len(K), h, dh).transpose(1, 0, 2)
    v = (V @ params.Wv).reshape(len(V), h, dh).transpose(1, 0, 2)
    att = _softmax(q @ k.transpose(0, 2, 1) / math.sqrt(dh))
    out = (att @ v).transpose(1, 0, 2).reshape(len(Q), d)
    return out @ params.Wo


# ---------------------------------------------------------------------------
# graph layer
# ---------------------------------------------------------------------------


@dataclass
class LayerParams:
    phi: Mlp
    psi: Mlp
    eps: float
    gamma: float
    f_theta: Linear
    f_xi: Linear
    attn: MhaParams


@dataclass
class GnnParams:
    layers: list[LayerParams] = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.layers)

    @classmethod
    def random(cls, K: int = 1, dim: int = FEATURE_DIM, hidden: int = FEATURE_DIM, heads: int = HEADS, seed: int = 0, activation: str = "silu"):
        rng = np.random.default_rng(seed)

        def lin(a, b):
            return Linear(rng.standard_normal((a, b)) / math.sqrt(a), 0.1 * rng.standard_normal(b))

        def sq():
            return rng.standard_normal((dim, dim)) / math.sqrt(dim)

        layers = [
            LayerParams(
                Mlp(lin(dim, hidden), lin(hidden, dim), activation),
                Mlp(lin(dim, hidden), lin(hidden, dim), activation),
                float(0.1 * rng.standard_normal()),
                float(0.1 * rng.standard_normal()),
                lin(dim, dim),
                lin(dim, dim),
                MhaParams(sq(), sq(), sq(), sq(), heads),
            )
            for _ in range(K)
        ]
        return cls(layers)


def _edge_array(adjacency, n_nodes: int, n_edges: int) -> np.ndarray:
    e = np.asarray(adjacency, dtype=np.int64).reshape(-1, 2) if len(adjacency) else np.zeros((0, 2), dtype=np.int64)
    if len(e) != n_edges:
        raise ShapeError(f"{len(e)} node pairs for {n_edges} edge features")
    if len(e) and (e.min() < 0 or e.max() >= n_nodes):
        raise ShapeError("edge endpoint out of range")
    return e


def gnn_layer(h_nodes, h_edges, adjacency, params: GnnParams, k: int = 0):
    """One message-passing layer.

    ``adjacency`` lists the (i, j) face pair of every row of ``h_edges``; the
    graph is undirected, so each pair feeds both endpoints.
    """
    H = np.atleast_2d(np.asarray(h_nodes, dtype=float))
    E = np.asarray(h_edges, dtype=float)
    if E.size and E.shape[-1] != H.shape[-1]:
        raise ShapeError("node and edge features differ in width")
    E = E.reshape(-1, H.shape[-1]) if E.size else np.zeros((0, H.shape[-1]))
    pairs = _edge_array(adjacency, len(H), len(E))
    L = params.layers[k]
    agg = (1.0 + L.eps) * H
    if len(pairs):
        gate = L.f_theta(E)
        i, j = pairs[:, 0], pairs[:, 1]
        msg = np.zeros_like(H)
        np.add.at(msg, i, gate * H[j])
        np.add.at(msg, j, gate * H[i])
        agg = agg + msg
    H_new = L.phi(agg)
    if not len(pairs):
        return H_new, E.copy()
    i, j = pairs[:, 0], pairs[:, 1]
    E_new = E + mha(E, H, H, L.attn) + L.psi((1.0 + L.gamma) * E + L.f_xi(H[i] + H[j]))
    return H_new, E_new


def gnn_forward(h_nodes, h_edges, adjacency, params: GnnParams):
    H = np.atleast_2d(np.asarray(h_nodes, dtype=float)).copy()
    E = np.asarray(h_edges, dtype=float).copy()
    for k in range(params.K):
        H, E = gnn_layer(H, E, adjacency, params, k)
    return H, E


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.1
    num_classes: int = 2
    tau: float = 0.07
    s_max: float = 100.0
    lambda_v: float = 0.5
    lambda_p: float = 0.5

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("label smoothing needs at least two classes")
        if not self.tau > 0:
            raise ConfigError("temperature must be positive")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("smoothing factor must lie in [0, 1]")
        if self.lambda_v < 0 or self.lambda_p < 0:
            raise ConfigError("loss weights must be non-negative")

    @property
    def log_s(self) -> float:
        return -math.log(self.tau)

    @property
    def s(self) -> float:
        return min(1.0 / self.tau, self.s_max)


def log_softmax(z):
    z = np.asarray(z, dtype=float)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def log_sigmoid(z):
    """log σ(z) without overflow for large |z|."""
    z = np.asarray(z, dtype=float)
    return -(np.maximum(-z, 0.0) + np.log1p(np.exp(-np.abs(z))))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _smoothed_target(y: int, alpha: float, N: int) -> np.ndarray:
    t = np.full(N, alpha / (N - 1))
    t[y] = 1.0 - alpha
    return t


def label_value_loss(logits, y: int, alpha: float, N: int | None = None) -> float:
    """Cross-entropy against the label-smoothed target distribution."""
    z = np.asarray(logits, dtype=float).reshape(-1)
    N = len(z) if N is None else N
    if N < 2:
        raise ConfigError("label smoothing needs at least two classes")
    if len(z) != N:
        raise ShapeError(f"{len(z)} logits for {N} classes")
    if not 0 <= y < N:
        raise ConfigError(f"target {y} outside [0, {N})")
    return float(-(_smoothed_target(y, alpha, N) * log_softmax(z)).sum())


def label_value_grad(logits, y: int, alpha: float, N: int | None = None) -> np.ndarray:
    z = np.asarray(logits, dtype=float).reshape(-1)
    N = len(z) if N is None else N
    return np.exp(log_softmax(z)) - _smoothed_target(y, alpha, N)


def _cosines(p, C):
    p = np.asarray(p, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    pn = np.linalg.norm(p)
    cn = np.linalg.norm(C, axis=1)
    if pn == 0 or (cn == 0).any():
        raise ConfigError("cosine similarity of a zero vector")
    return C @ p / (pn * cn), pn, C / cn[:, None]


def _labels(n: int, positives, negatives) -> tuple[np.ndarray, np.ndarray]:
    pos = np.asarray(list(positives), dtype=np.int64)
    neg = np.asarray(list(negatives), dtype=np.int64)
    if len(pos) + len(neg) == 0:
        raise ConfigError("pointer loss needs at least one candidate")
    idx = np.concatenate([pos, neg])
    if len(idx) and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError("candidate index out of range")
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return idx, y


def pointer_loss(p, candidates, positives, negatives, tau: float = 0.07) -> float:
    """Mean binary cross-entropy of σ(cos/τ) over the listed candidates."""
    if not tau > 0:
        raise ConfigError("temperature must be positive")
    C = np.atleast_2d(np.asarray(candidates, dtype=float))
    idx, y = _labels(len(C), positives, negatives)
    cos, _, _ = _cosines(p, C[idx])
    z = cos / tau
    return float(-(y * log_sigmoid(z) + (1 - y) * log_sigmoid(-z)).sum() / len(idx))


def pointer_loss_grad(p, candidates, positives, negatives, log_s: float, s_max: float = 100.0):
    """(L_p, dL/dp, dL/dlog s) with s = min(exp(log s), s_max)."""
    C = np.atleast_2d(np.asarray(candidates, dtype=float))
    idx, y = _labels(len(C), positives, negatives)
    raw = math.exp(log_s)
    s = min(raw, s_max)
    cos, pn, Chat = _cosines(p, C[idx])
    z = s * cos
    M = len(idx)
    loss = float(-(y * log_sigmoid(z) + (1 - y) * log_sigmoid(-z)).sum() / M)
    dz = (sigmoid(z) - y) / M
    phat = np.asarray(p, dtype=float) / pn
    dcos_dp = (Chat - cos[:, None] * phat) / pn
    grad_p = s * (dz[:, None] * dcos_dp).sum(axis=0)
    grad_log_s = float((dz * cos).sum() * s) if raw < s_max else 0.0
    return loss, grad_p, grad_log_s


def total_loss(L_v: float, L_p: float, lambda_v: float = 0.5, lambda_p: float = 0.5) -> float:
    if lambda_v < 0 or lambda_p < 0:
        raise ConfigError("loss weights must be non-negative")
    return lambda_v * L_v + lambda_p * L_p


def grad_check(loss_fn, params, eps_fd: float = 1e-5, floor: float = 1e-8) -> float:
    """Max relative error between the analytic and central-difference gradients.

    ``loss_fn(x)`` returns ``(value, gradient)``.  The relative error of a
    component is |a - n| / max(|a|, |n|, floor).
    """
    x = np.array(params, dtype=float)
    _, analytic = loss_fn(x.copy())
    analytic = np.asarray(analytic, dtype=float).reshape(x.shape)
    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps_fd
        fp, _ = loss_fn(x.copy())
        flat[i] = orig - eps_fd
        fm, _ = loss_fn(x.copy())
        flat[i] = orig
        numeric.reshape(-1)[i] = (fp - fm) / (2 * eps_fd)
    err = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(err.max()) if err.size else 0.0
