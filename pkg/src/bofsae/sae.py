"""Single-layer sparse auto-encoder with a unit-norm dictionary.

Encoder ``z = sigmoid(W.T x + b1)``, linear decoder ``xhat = V z + b2``.
The objective on a batch of N columns is

    E = 1/(2N) sum_i ||x_i - xhat_i||^2 + beta * sum_k KL(rho || rho_hat_k)

with ``rho_hat = mean_i z_i``. Training is projected mini-batch gradient
descent: every update is followed by rescaling each column of W to unit
L2 norm.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import binio
from .errors import ContractError, DivergenceError, NumericalError
from .rng import generator

RHO_EPS = 1e-8


@dataclass(frozen=True)
class SaeConfig:
    hidden: int = 1024
    rho: float = 0.05
    beta: float = 3.0
    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int = 256
    seed: int = 0
    init_scale: object = "glorot"

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ContractError(f"rho must be in (0, 1), got {self.rho}")
        if self.beta < 0:
            raise ContractError(f"beta must be >= 0, got {self.beta}")
        if self.learning_rate <= 0:
            raise ContractError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.hidden < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ContractError("hidden and batch_size must be >= 1, epochs >= 0")
        if self.init_scale != "glorot" and not float(self.init_scale) > 0:
            raise ContractError("init_scale must be 'glorot' or a positive number")

    def init_range(self, d):
        if self.init_scale == "glorot":
            return float(np.sqrt(6.0 / (d + self.hidden)))
        return float(self.init_scale)


@dataclass(frozen=True, eq=False)
class SaeLayer:
    W: np.ndarray
    V: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        d, K = self.W.shape
        if self.V.shape != (d, K) or self.b1.shape != (K,) or self.b2.shape != (d,):
            raise ContractError(
                f"inconsistent layer shapes W{self.W.shape} V{self.V.shape} "
                f"b1{self.b1.shape} b2{self.b2.shape}"
            )

    @property
    def d(self):
        return self.W.shape[0]

    @property
    def K(self):
        return self.W.shape[1]

    @classmethod
    def zeros(cls, d, K):
        return cls(np.zeros((d, K)), np.zeros((d, K)), np.zeros(K), np.zeros(d))

    def replace(self, **changes):
        fields = dict(W=self.W, V=self.V, b1=self.b1, b2=self.b2)
        fields.update(changes)
        return SaeLayer(**fields)

    def identical(self, other):
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("W", "V", "b1", "b2")
        )

    def column_norm_error(self):
        return float(np.max(np.abs(np.linalg.norm(self.W, axis=0) - 1.0)))


def activation(t):
    """Logistic sigmoid, overflow-free for any finite input."""
    return expit(np.asarray(t, dtype=np.float64))


def _as_batch(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != d:
        raise ContractError(f"expected batch with {d} rows, got shape {X.shape}")
    if X.shape[1] < 1:
        raise ContractError("batch must have at least one column")
    return X


def hidden(layer, X):
    """Codes for each column of a d x N batch, shape K x N."""
    X = _as_batch(X, layer.d)
    return activation(layer.W.T @ X + layer.b1[:, None])


def forward(layer, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.d,):
        raise ContractError(f"expected vector of length {layer.d}, got shape {x.shape}")
    z = activation(layer.W.T @ x + layer.b1)
    return z, layer.V @ z + layer.b2


def mean_activation(layer, X):
    return hidden(layer, X).mean(axis=1)


def kl_term(rho, rho_hat):
    """Sum over units of KL(rho || rho_hat_k), natural log, rho_hat clamped to [eps, 1-eps]."""
    r = np.clip(np.asarray(rho_hat, dtype=np.float64), RHO_EPS, 1.0 - RHO_EPS)
    terms = rho * np.log(rho / r) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - r))
    # Each term is >= 0 analytically; rounding can leave -1e-17 at rho_hat == rho.
    return float(np.sum(np.maximum(terms, 0.0)))


def _loss_parts(layer, X, cfg):
    Z = activation(layer.W.T @ X + layer.b1[:, None])
    R = layer.V @ Z + layer.b2[:, None] - X
    n = X.shape[1]
    rho_hat = Z.mean(axis=1)
    recon = float(np.sum(R * R)) / (2.0 * n)
    sparsity = cfg.beta * kl_term(cfg.rho, rho_hat) if cfg.beta else 0.0
    return Z, R, rho_hat, recon, sparsity


def batch_loss(layer, X, cfg):
    """(recon, sparsity, total) on the whole batch."""
    X = _as_batch(X, layer.d)
    _, _, _, recon, sparsity = _loss_parts(layer, X, cfg)
    return recon, sparsity, recon + sparsity


def _loss_and_gradients(layer, X, cfg):
    Z, R, rho_hat, recon, sparsity = _loss_parts(layer, X, cfg)
    n = X.shape[1]
    gV = R @ Z.T / n
    gb2 = R.sum(axis=1) / n
    dZ = layer.V.T @ R / n
    if cfg.beta:
        r = np.clip(rho_hat, RHO_EPS, 1.0 - RHO_EPS)
        dZ = dZ + (cfg.beta / n) * (-cfg.rho / r + (1.0 - cfg.rho) / (1.0 - r))[:, None]
    delta = dZ * Z * (1.0 - Z)
    gW = X @ delta.T
    gb1 = delta.sum(axis=1)
    return recon + sparsity, (gW, gV, gb1, gb2)


def gradients(layer, X, cfg):
    """Exact gradients of ``batch_loss(...).total``: (gW, gV, gb1, gb2)."""
    X = _as_batch(X, layer.d)
    return _loss_and_gradients(layer, X, cfg)[1]


def normalize_columns(W):
    norms = np.linalg.norm(W, axis=0)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise NumericalError("dictionary has a zero or non-finite column")
    return W / norms


def project_unit_norm(layer):
    return layer.replace(W=normalize_columns(layer.W))


def init_layer(d, cfg):
    rng = generator(cfg.seed)
    r = cfg.init_range(d)
    W = rng.uniform(-r, r, size=(d, cfg.hidden))
    V = rng.uniform(-r, r, size=(d, cfg.hidden))
    layer = SaeLayer(W, V, np.zeros(cfg.hidden), np.zeros(d))
    return project_unit_norm(layer), rng


def train(X, cfg, hook=None):
    """Projected mini-batch gradient descent from a seeded initialisation.

    ``hook(layer, epoch, step)`` is called after every update.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ContractError(f"training batch must be d x N with N >= 1, got {X.shape}")
    d, n = X.shape
    layer, rng = init_layer(d, cfg)
    rows = np.ascontiguousarray(X.T)
    lr = cfg.learning_rate
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            xb = rows[order[start:start + cfg.batch_size]].T
            loss, (gW, gV, gb1, gb2) = _loss_and_gradients(layer, xb, cfg)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, lr)
            layer = SaeLayer(
                normalize_columns(layer.W - lr * gW),
                layer.V - lr * gV,
                layer.b1 - lr * gb1,
                layer.b2 - lr * gb2,
            )
            step += 1
            if hook is not None:
                hook(layer, epoch, step)
    return layer


# --------------------------------------------------------------------------
# GFL1 persistence

GFL1_MAGIC = b"GFL1"


def layer_bytes(layer):
    return b"".join([
        GFL1_MAGIC,
        binio.u32(layer.d),
        binio.u32(layer.K),
        binio.column_major_bytes(layer.W, np.float64),
        binio.column_major_bytes(layer.V, np.float64),
        binio.array_bytes(layer.b1, np.float64),
        binio.array_bytes(layer.b2, np.float64),
    ])


def read_layer(reader):
    reader.magic(GFL1_MAGIC)
    d = reader.u32()
    K = reader.u32()
    W = reader.column_major(np.float64, d, K)
    V = reader.column_major(np.float64, d, K)
    b1 = reader.array(np.float64, K)
    b2 = reader.array(np.float64, d)
    return SaeLayer(W, V, b1, b2)


def save_layer(path, layer):
    Path(path).write_bytes(layer_bytes(layer))


def load_layer(path):
    return read_layer(binio.Reader(Path(path).read_bytes(), str(path)))
