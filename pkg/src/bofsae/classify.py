"""One-vs-rest L2-regularised linear SVM, prediction and confusion accounting.

Each class ``j`` minimises ``0.5 ||w_j||^2 + C sum_i max(0, 1 - y_ij (w_j.f_i + b_j))``
by stochastic subgradient descent on the per-example split
``||w||^2 / (2n) + C hinge_i`` with step ``lr0 / (1 + lr0 t / C)``. The bias
is not regularised. Class ``j`` draws its example order from a generator
seeded with ``seed + j``.

With ``standardize`` on, training runs on per-dimension z-scored features
(statistics from the training set) and the affine map is folded back into
the returned weights and bias, so the model applies to raw features.
Max-pooled sigmoid codes sit on a large common offset with small
image-to-image variation, which the plain subgradient schedule cannot
resolve unaided.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import binio
from .errors import ContractError, TrainingError
from .rng import generator


@dataclass(frozen=True)
class SvmConfig:
    c_reg: float = 1.0
    epochs: int = 50
    lr0: float = 0.1
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.c_reg <= 0:
            raise ContractError(f"c_reg must be > 0, got {self.c_reg}")
        if self.lr0 <= 0 or self.epochs < 0:
            raise ContractError("lr0 must be > 0 and epochs >= 0")


@dataclass(frozen=True, eq=False)
class LinearSvmModel:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ContractError("weights must be C x D with one bias per class")

    @property
    def C(self):
        return self.weights.shape[0]

    @property
    def D(self):
        return self.weights.shape[1]

    def scores(self, F):
        F = np.atleast_2d(np.asarray(F, dtype=np.float64))
        if F.shape[1] != self.D:
            raise ContractError(f"feature length {F.shape[1]} does not match model dim {self.D}")
        return F @ self.weights.T + self.bias


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple = ()

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def accuracy(self):
        return float(np.trace(self.counts)) / self.total

    def per_class_accuracy(self):
        rows = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.counts) / np.maximum(rows, 1), np.nan)

    def write_csv(self, path):
        names = self.class_names or tuple(str(i) for i in range(len(self.counts)))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            w.writerows(self.counts.tolist())

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array([[int(v) for v in r] for r in rows[1:]], dtype=np.int64), tuple(rows[0]))


def _stack(features):
    features = list(features)
    if not features:
        raise ContractError("no features given")
    dims = {len(f.vector) for f in features}
    if len(dims) != 1:
        raise ContractError(f"features have differing dimensions {sorted(dims)}")
    F = np.array([f.vector for f in features], dtype=np.float64)
    y = np.array([f.label for f in features], dtype=np.int64)
    return F, y


def ovr_objective(w, b, F, y_pm, c_reg):
    margins = y_pm * (F @ w + b)
    return 0.5 * float(w @ w) + c_reg * float(np.maximum(0.0, 1.0 - margins).sum())


def example_subgradient(w, b, f, y, n, c_reg):
    """Subgradient of ``||w||^2/(2n) + C max(0, 1 - y (w.f + b))`` in (w, b)."""
    active = y * (f @ w + b) < 1.0
    gw = w / n - (c_reg * y * f if active else 0.0)
    gb = -c_reg * y if active else 0.0
    return gw, gb


def feature_scaling(F):
    """Per-dimension mean and scale; constant dimensions keep scale 1."""
    mean = F.mean(axis=0)
    scale = F.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def train_svm_arrays(F, y, cfg, num_classes=None):
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    C = int(y.max()) + 1 if num_classes is None else int(num_classes)
    if len(np.unique(y)) < 2:
        raise TrainingError("SVM training needs at least two classes present")
    if not cfg.standardize:
        return _fit_ovr(F, y, cfg, C)
    mean, scale = feature_scaling(F)
    model = _fit_ovr((F - mean) / scale, y, cfg, C)
    weights = model.weights / scale
    return LinearSvmModel(weights, model.bias - weights @ mean)


def _fit_ovr(F, y, cfg, C):
    n, D = F.shape
    # All classes advance in lock-step; each follows its own example order.
    rngs = [generator(cfg.seed + j) for j in range(C)]
    Y = np.where(y[None, :] == np.arange(C)[:, None], 1.0, -1.0)
    W = np.zeros((C, D))
    b = np.zeros(C)
    cls = np.arange(C)
    t = 0
    for _ in range(cfg.epochs):
        orders = np.stack([rng.permutation(n) for rng in rngs])
        for k in range(n):
            eta = cfg.lr0 / (1.0 + cfg.lr0 * t / cfg.c_reg)
            idx = orders[:, k]
            f = F[idx]
            yy = Y[cls, idx]
            active = yy * (np.einsum("cd,cd->c", W, f) + b) < 1.0
            step = np.where(active, cfg.c_reg * yy, 0.0)
            W = W - eta * (W / n - step[:, None] * f)
            b = b + eta * step
            t += 1
    return LinearSvmModel(W, b)


def train_svm(features, cfg, num_classes=None):
    F, y = _stack(features)
    return train_svm_arrays(F, y, cfg, num_classes)


def predict(model, f):
    """Highest-scoring class; ties go to the smallest index."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (model.D,):
        raise ContractError(f"feature length {f.shape} does not match model dim {model.D}")
    return int(np.argmax(model.scores(f)[0]))


def predict_many(model, F):
    return np.argmax(model.scores(F), axis=1)


def confusion(y_true, y_pred, num_classes, class_names=()):
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return ConfusionMatrix(counts, tuple(class_names))


def evaluate(model, test, class_names=()):
    F, y = _stack(test)
    pred = predict_many(model, F)
    cm = confusion(y, pred, max(model.C, int(y.max()) + 1), class_names)
    return cm.accuracy, cm


# --------------------------------------------------------------------------
# GFSV persistence

GFSV_MAGIC = b"GFSV"


def save_svm(path, model):
    blob = GFSV_MAGIC + binio.u32(model.C) + binio.u32(model.D)
    blob += binio.array_bytes(model.weights, np.float64) + binio.array_bytes(model.bias, np.float64)
    Path(path).write_bytes(blob)


def load_svm(path):
    r = binio.Reader(Path(path).read_bytes(), str(path))
    r.magic(GFSV_MAGIC)
    C, D = r.u32(), r.u32()
    W = r.array(np.float64, C * D).reshape(C, D)
    return LinearSvmModel(W, r.array(np.float64, C))
