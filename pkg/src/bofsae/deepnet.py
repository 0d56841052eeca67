"""Two stacked sparse auto-encoders used as a feed-forward descriptor encoder.

Layer 2 is trained greedily on layer 1's codes. Supervised fine-tuning puts
a softmax head on top and back-propagates patch-level cross-entropy into
both encoder layers; decoders stay frozen and the unit-norm constraint on
both dictionaries is re-imposed after every step.

An encoder whose ``layer2`` is ``None`` is the shallow (single-layer)
variant used by the depth ablation.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import binio, sae
from .errors import CompatibilityError, ContractError, DecodeError, DivergenceError
from .rng import generator


@dataclass(frozen=True, eq=False)
class SoftmaxHead:
    U: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.U.ndim != 2 or self.c.shape != (self.U.shape[1],):
            raise ContractError(f"head shapes U{self.U.shape} c{self.c.shape} disagree")
        if self.U.shape[1] < 2:
            raise ContractError("softmax head needs at least 2 classes")

    @property
    def C(self):
        return self.U.shape[1]


@dataclass(frozen=True)
class Code:
    values: np.ndarray


@dataclass(frozen=True)
class FineTuneConfig:
    lr: float = 0.1
    epochs: int = 20
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ContractError("fine-tune lr/epochs must be >= 0 and batch_size >= 1")


@dataclass(frozen=True, eq=False)
class DeepEncoder:
    layer1: sae.SaeLayer
    layer2: sae.SaeLayer = None
    head: SoftmaxHead = None

    def __post_init__(self):
        if self.layer2 is not None and self.layer2.d != self.layer1.K:
            raise ContractError(
                f"layer2 input {self.layer2.d} does not match layer1 width {self.layer1.K}"
            )
        if self.head is not None and self.head.U.shape[0] != self.code_size:
            raise ContractError("head input size does not match the code size")

    @property
    def depth(self):
        return 1 if self.layer2 is None else 2

    @property
    def input_dim(self):
        return self.layer1.d

    @property
    def code_size(self):
        return self.layer1.K if self.layer2 is None else self.layer2.K

    @property
    def layers(self):
        return (self.layer1,) if self.layer2 is None else (self.layer1, self.layer2)

    def without_head(self):
        return DeepEncoder(self.layer1, self.layer2)

    def identical(self, other):
        if self.depth != other.depth:
            return False
        return all(a.identical(b) for a, b in zip(self.layers, other.layers))


def stack_train(X, cfg1, cfg2, hook=None):
    """Greedy layer-wise pretraining; ``hook(layer_index, layer, epoch, step)``."""
    h1 = None if hook is None else (lambda layer, e, s: hook(1, layer, e, s))
    h2 = None if hook is None else (lambda layer, e, s: hook(2, layer, e, s))
    layer1 = sae.train(X, cfg1, hook=h1)
    Z1 = sae.hidden(layer1, X)
    layer2 = sae.train(Z1, cfg2, hook=h2)
    return DeepEncoder(layer1, layer2)


def encode_rows(enc, vectors):
    """Codes for an (M, d) array of descriptors, shape (M, code_size)."""
    H = np.asarray(vectors, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != enc.input_dim:
        raise ContractError(f"expected (M, {enc.input_dim}) descriptors, got {H.shape}")
    for layer in enc.layers:
        H = sae.activation(H @ layer.W + layer.b1)
    return H


def encode(enc, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (enc.input_dim,):
        raise ContractError(f"expected descriptor of length {enc.input_dim}, got {x.shape}")
    h = x
    for layer in enc.layers:
        h = sae.activation(layer.W.T @ h + layer.b1)
    return Code(h)


def softmax_rows(S):
    S = S - S.max(axis=1, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=1, keepdims=True)


def cross_entropy(enc, head, X, labels):
    """Mean cross-entropy of the head's softmax on the columns of a d x N batch."""
    H = encode_rows(enc, np.asarray(X, dtype=np.float64).T)
    S = H @ head.U + head.c
    S = S - S.max(axis=1, keepdims=True)
    logp = S - np.log(np.exp(S).sum(axis=1, keepdims=True))
    labels = np.asarray(labels)
    return float(-logp[np.arange(len(labels)), labels].mean())


def _ce_and_gradients(layers, head, rows, labels):
    """Forward/backward on (B, d) rows; returns loss and per-block gradients."""
    acts = [rows]
    for W, b in layers:
        acts.append(sae.activation(acts[-1] @ W + b))
    top = acts[-1]
    S = top @ head[0] + head[1]
    P = softmax_rows(S)
    n = len(rows)
    loss = -float(np.log(np.maximum(P[np.arange(n), labels], 1e-300)).mean())
    dS = P
    dS[np.arange(n), labels] -= 1.0
    dS /= n
    gU = top.T @ dS
    gc = dS.sum(axis=0)
    grads = []
    dH = dS @ head[0].T
    for i in range(len(layers) - 1, -1, -1):
        H = acts[i + 1]
        delta = dH * H * (1.0 - H)
        grads.append((acts[i].T @ delta, delta.sum(axis=0)))
        if i:
            dH = delta @ layers[i][0].T
    grads.reverse()
    return loss, grads, (gU, gc)


def head_gradients(enc, head, X, labels):
    """Gradients of :func:`cross_entropy` with respect to (U, c)."""
    rows = np.asarray(X, dtype=np.float64).T
    layers = [(layer.W, layer.b1) for layer in enc.layers]
    _, _, (gU, gc) = _ce_and_gradients(layers, (head.U, head.c), rows, np.asarray(labels))
    return gU, gc


def init_head(code_size, num_classes, seed):
    rng = generator(seed)
    r = float(np.sqrt(6.0 / (code_size + num_classes)))
    return SoftmaxHead(rng.uniform(-r, r, size=(code_size, num_classes)), np.zeros(num_classes)), rng


def fine_tune(enc, X, labels, cfg, num_classes=None, hook=None):
    """Supervised fine-tuning of the encoder dictionaries through a softmax head.

    ``hook(encoder, epoch, step)`` is called after every update. With
    ``lr == 0`` or ``epochs == 0`` the encoder weights are returned untouched.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != enc.input_dim or X.shape[1] != len(labels):
        raise ContractError(f"labels ({len(labels)}) must align with the columns of X {X.shape}")
    C = int(labels.max()) + 1 if num_classes is None else int(num_classes)
    if C < 2:
        raise ContractError("fine-tuning needs at least 2 classes")
    head, rng = init_head(enc.code_size, C, cfg.seed)
    if cfg.lr == 0 or cfg.epochs == 0:
        return DeepEncoder(enc.layer1, enc.layer2, head)
    rows = np.ascontiguousarray(X.T)
    layers = [(layer.W, layer.b1) for layer in enc.layers]
    U, c = head.U, head.c
    lr = cfg.lr
    n = len(rows)
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, (gU, gc) = _ce_and_gradients(layers, (U, c), rows[idx], labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, lr, "cross-entropy")
            layers = [
                (sae.normalize_columns(W - lr * gW), b - lr * gb)
                for (W, b), (gW, gb) in zip(layers, grads)
            ]
            U, c = U - lr * gU, c - lr * gc
            step += 1
            if hook is not None:
                hook(_rebuild(enc, layers, SoftmaxHead(U, c)), epoch, step)
    return _rebuild(enc, layers, SoftmaxHead(U, c))


def _rebuild(enc, layers, head):
    new = [old.replace(W=W, b1=b) for old, (W, b) in zip(enc.layers, layers)]
    return DeepEncoder(new[0], new[1] if len(new) > 1 else None, head)


# --------------------------------------------------------------------------
# GFDE persistence

GFDE_MAGIC = b"GFDE"
GFSH_MAGIC = b"GFSH"


def save_encoder(path, enc):
    if enc.layer2 is None:
        raise CompatibilityError("the GFDE container stores two-layer encoders only")
    parts = [GFDE_MAGIC, sae.layer_bytes(enc.layer1), sae.layer_bytes(enc.layer2)]
    if enc.head is not None:
        K2, C = enc.head.U.shape
        parts += [
            GFSH_MAGIC, binio.u32(K2), binio.u32(C),
            binio.column_major_bytes(enc.head.U, np.float64),
            binio.array_bytes(enc.head.c, np.float64),
        ]
    Path(path).write_bytes(b"".join(parts))


def load_encoder(path):
    r = binio.Reader(Path(path).read_bytes(), str(path))
    r.magic(GFDE_MAGIC)
    layer1 = sae.read_layer(r)
    layer2 = sae.read_layer(r)
    head = None
    if not r.at_end():
        r.magic(GFSH_MAGIC)
        K2, C = r.u32(), r.u32()
        head = SoftmaxHead(r.column_major(np.float64, K2, C), r.array(np.float64, C))
        if not r.at_end():
            raise DecodeError(f"{path}: trailing bytes after head block")
    return DeepEncoder(layer1, layer2, head)
