"""KNN, sigmoid MLP and SMO-trained kernel SVM behind one train/predict surface."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bgfg import decode_array, encode_array

logger = logging.getLogger(__name__)

KINDS = ("knn", "ann", "svm")


class TrainingError(ValueError):
    pass


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


# -- data ----------------------------------------------------------------------

@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: list[str]
    vocabulary: tuple[str, ...] = ()

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = [str(l) for l in self.labels]
        if len(self.labels) != self.features.shape[0]:
            raise ValueError("features and labels differ in length")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature values")
        if not self.vocabulary:
            self.vocabulary = tuple(sorted(set(self.labels)))
        unknown = set(self.labels) - set(self.vocabulary)
        if unknown:
            raise ValueError(f"labels outside vocabulary: {sorted(unknown)}")

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels))


# -- distances and kernels -----------------------------------------------------

def euclidean_distance(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.sqrt(np.sum((x - y) ** 2)))


def pairwise_distances(Q: np.ndarray, X: np.ndarray) -> np.ndarray:
    _check_dims(Q, X)
    diff = Q[:, None, :] - X[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float | None = None  # None -> 1 / dim
    degree: int = 3

    def __post_init__(self):
        if self.kind not in ("rbf", "poly", "linear"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.kind == "poly" and self.degree < 1:
            raise ValueError("degree must be >= 1")

    def resolved(self, dim: int) -> "KernelSpec":
        if self.kind == "rbf" and self.gamma is None:
            return KernelSpec("rbf", 1.0 / dim, self.degree)
        return self

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "degree": self.degree}


def kernel_matrix(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    _check_dims(X, Y)
    if spec.kind == "linear":
        return X @ Y.T
    if spec.kind == "poly":
        return (X @ Y.T + 1.0) ** spec.degree
    gamma = spec.gamma if spec.gamma is not None else 1.0 / X.shape[1]
    sq = np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=-1)
    return np.exp(-gamma * sq)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    return float(kernel_matrix(spec, x, y)[0, 0])


# -- KNN -----------------------------------------------------------------------

@dataclass
class KnnModel:
    features: np.ndarray
    labels: list[str]
    k: int = 5

    def __post_init__(self):
        if self.k < 1 or self.k > len(self.labels):
            raise ValueError(f"K={self.k} outside [1, {len(self.labels)}]")


def knn_train(data: LabeledDataset, k: int = 5) -> KnnModel:
    return KnnModel(data.features.copy(), list(data.labels), min(k, len(data.labels)))


def knn_predict(model: KnnModel, query) -> tuple[str, float]:
    q = np.asarray(query, dtype=np.float64)
    _check_dims(q, model.features)
    dist = np.sqrt(np.sum((model.features - q) ** 2, axis=1))
    nearest = np.argsort(dist, kind="stable")[: model.k]
    votes: dict[str, list] = {}
    for i in nearest:
        v = votes.setdefault(model.labels[i], [0, 0.0])
        v[0] += 1
        v[1] += dist[i]
    label = min(votes, key=lambda l: (-votes[l][0], votes[l][1], l))
    return label, votes[label][0] / model.k


# -- MLP -----------------------------------------------------------------------

def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MlpModel:
    w1: np.ndarray  # (v, h)
    b1: np.ndarray
    w2: np.ndarray  # (h, n_classes)
    b2: np.ndarray
    classes: list[str]
    rate: float = 0.1
    epochs: int = 500
    seed: int = 0
    loss_trace: list[float] = field(default_factory=list)

    def forward(self, X: np.ndarray):
        hidden = sigmoid(X @ self.w1 + self.b1)
        return hidden, sigmoid(hidden @ self.w2 + self.b2)


def mlp_init(v: int, h: int, n_out: int, seed: int) -> tuple[np.ndarray, ...]:
    rng = np.random.default_rng(seed)
    return (rng.uniform(-0.5, 0.5, (v, h)), rng.uniform(-0.5, 0.5, h),
            rng.uniform(-0.5, 0.5, (h, n_out)), rng.uniform(-0.5, 0.5, n_out))


def mlp_loss_and_grads(params, X: np.ndarray, T: np.ndarray):
    """Loss = mean over samples of 0.5 * squared error; returns (loss, grads)."""
    w1, b1, w2, b2 = params
    n = X.shape[0]
    hid = sigmoid(X @ w1 + b1)
    out = sigmoid(hid @ w2 + b2)
    err = out - T
    loss = 0.5 * float(np.sum(err * err)) / n
    d_out = err * out * (1.0 - out) / n
    g_w2 = hid.T @ d_out
    g_b2 = d_out.sum(axis=0)
    d_hid = (d_out @ w2.T) * hid * (1.0 - hid)
    g_w1 = X.T @ d_hid
    g_b1 = d_hid.sum(axis=0)
    return loss, (g_w1, g_b1, g_w2, g_b2)


def one_hot(labels: Sequence[str], classes: Sequence[str]) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    T = np.zeros((len(labels), len(classes)))
    T[np.arange(len(labels)), [index[l] for l in labels]] = 1.0
    return T


def mlp_train(data: LabeledDataset, h: int = 64, rate: float = 0.1, epochs: int = 500,
              seed: int = 0) -> MlpModel:
    classes = data.classes
    if len(classes) < 2:
        raise TrainingError("MLP training needs at least two classes")
    X = data.features
    T = one_hot(data.labels, classes)
    params = list(mlp_init(X.shape[1], h, len(classes), seed))
    trace = []
    for _ in range(epochs):
        loss, grads = mlp_loss_and_grads(params, X, T)
        trace.append(loss)
        params = [p - rate * g for p, g in zip(params, grads)]
    w1, b1, w2, b2 = params
    return MlpModel(w1, b1, w2, b2, classes, rate, epochs, seed, trace)


def mlp_predict(model: MlpModel, query) -> tuple[str, np.ndarray]:
    q = np.atleast_2d(np.asarray(query, dtype=np.float64))
    if q.shape[1] != model.w1.shape[0]:
        raise ValueError(f"dimension mismatch: {q.shape[1]} vs {model.w1.shape[0]}")
    scores = model.forward(q)[1][0]
    return _argmax_label(scores, model.classes), scores


# -- SVM -----------------------------------------------------------------------

@dataclass
class SvmBinary:
    support: np.ndarray  # support-vector features
    y: np.ndarray  # +-1
    alpha: np.ndarray
    b: float
    kernel: KernelSpec
    c: float
    objective_trace: list[float] = field(default_factory=list)

    def decision(self, Q: np.ndarray) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        if self.support.shape[0] == 0:
            return np.full(Q.shape[0], self.b)
        _check_dims(Q, self.support)
        return kernel_matrix(self.kernel, Q, self.support) @ (self.alpha * self.y) + self.b


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def kkt_violations(alpha: np.ndarray, y: np.ndarray, K: np.ndarray, b: float, c: float,
                   bound_tol: float = 1e-12) -> np.ndarray:
    """Per-sample KKT violation magnitudes for the soft-margin dual."""
    margin = y * (K @ (alpha * y) + b)
    viol = np.zeros_like(alpha)
    at_zero = alpha <= bound_tol
    at_c = alpha >= c - bound_tol
    free = ~at_zero & ~at_c
    viol[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    viol[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    viol[free] = np.abs(margin[free] - 1.0)
    return viol


def _gap_indices(alpha, y, grad, c, bound_tol):
    """Maximal violating pair (i in I_up, j in I_low) for the dual."""
    yg = -y * grad
    up = ((y > 0) & (alpha < c - bound_tol)) | ((y < 0) & (alpha > bound_tol))
    low = ((y > 0) & (alpha > bound_tol)) | ((y < 0) & (alpha < c - bound_tol))
    if not up.any() or not low.any():
        return None
    i = int(np.flatnonzero(up)[np.argmax(yg[up])])
    j = int(np.flatnonzero(low)[np.argmin(yg[low])])
    return i, j, yg[i] - yg[j]


def _bias(alpha, y, grad, c, bound_tol):
    yg = -y * grad
    free = (alpha > bound_tol) & (alpha < c - bound_tol)
    if free.any():
        return float(np.mean(yg[free]))
    up = ((y > 0) & (alpha < c - bound_tol)) | ((y < 0) & (alpha > bound_tol))
    low = ((y > 0) & (alpha > bound_tol)) | ((y < 0) & (alpha < c - bound_tol))
    hi = yg[up].max() if up.any() else 0.0
    lo = yg[low].min() if low.any() else 0.0
    return float(0.5 * (hi + lo))


def svm_train_binary(X, y, kernel: KernelSpec = KernelSpec(), c: float = 10.0, tol: float = 1e-3,
                     max_iter: int = 100_000, seed: int = 0) -> SvmBinary:
    """SMO on the dual: pairwise updates clipped to [0, C] with sum(alpha * y) = 0.

    Pairs are chosen as the maximal KKT-violating pair; ``seed`` is kept for
    interface symmetry with the other trainers (the selection is deterministic).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise TrainingError("binary SVM needs both +1 and -1 labels")
    kernel = kernel.resolved(X.shape[1])
    K = kernel_matrix(kernel, X, X)
    eig_min = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())
    if eig_min < -1e-8 * max(1.0, float(np.abs(K).max())):
        warnings.warn(f"kernel matrix is not PSD on the training set (min eigenvalue {eig_min:.3g})")
    n = len(y)
    bound_tol = 1e-12 * c
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - sum(a), Q = yy'K
    trace = [0.0]
    for _ in range(max_iter):
        pick = _gap_indices(alpha, y, grad, c, bound_tol)
        if pick is None:
            break
        i, j, gap = pick
        b = _bias(alpha, y, grad, c, bound_tol)
        if gap < tol and kkt_violations(alpha, y, K, b, c, bound_tol).max() < tol:
            break
        if gap <= 1e-15:
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        quad = quad if quad > 1e-12 else 1e-12
        # step along alpha_i += y_i t, alpha_j -= y_j t
        t = gap / quad
        t_max_i = (c - alpha[i]) if y[i] > 0 else alpha[i]
        t_max_j = alpha[j] if y[j] > 0 else (c - alpha[j])
        t = min(t, t_max_i, t_max_j)
        if t <= 0:
            break
        di, dj = y[i] * t, -y[j] * t
        alpha[i] += di
        alpha[j] += dj
        alpha[i] = min(max(alpha[i], 0.0), c)
        alpha[j] = min(max(alpha[j], 0.0), c)
        grad += y * (K[:, i] * y[i] * di + K[:, j] * y[j] * dj)
        trace.append(dual_objective(alpha, y, K))
    else:
        logger.warning("SMO hit the iteration cap (%d)", max_iter)
    b = _bias(alpha, y, grad, c, bound_tol)
    sv = alpha > bound_tol
    return SvmBinary(X[sv].copy(), y[sv].copy(), alpha[sv].copy(), b, kernel, c, trace)


def svm_predict_binary(model: SvmBinary, query) -> float:
    return float(model.decision(np.asarray(query, dtype=np.float64)[None])[0])


@dataclass
class SvmModel:
    classes: list[str]
    machines: list[SvmBinary]

    def scores(self, Q: np.ndarray) -> np.ndarray:
        return np.stack([m.decision(Q) for m in self.machines], axis=-1)


def svm_train(data: LabeledDataset, kernel: KernelSpec = KernelSpec(), c: float = 10.0,
              tol: float = 1e-3, seed: int = 0) -> SvmModel:
    classes = data.classes
    if len(classes) < 2:
        raise TrainingError("SVM training needs at least two classes")
    labels = np.array(data.labels)
    machines = []
    for cls in classes:
        y = np.where(labels == cls, 1.0, -1.0)
        machines.append(svm_train_binary(data.features, y, kernel, c, tol, seed=seed))
    return SvmModel(classes, machines)


def _argmax_label(scores: np.ndarray, classes: Sequence[str]) -> str:
    top = scores.max()
    return sorted(c for c, s in zip(classes, scores) if s == top)[0]


def svm_predict(model: SvmModel, query) -> tuple[str, float]:
    s = model.scores(np.asarray(query, dtype=np.float64)[None])[0]
    label = _argmax_label(s, model.classes)
    return label, float(s.max())


# -- multiclass front end and persistence --------------------------------------

@dataclass
class TrainedModel:
    kind: str
    model: object
    vocabulary: tuple[str, ...]
    hyperparams: dict

    def predict(self, query) -> tuple[str, float]:
        if self.kind == "knn":
            return knn_predict(self.model, query)
        if self.kind == "ann":
            label, scores = mlp_predict(self.model, query)
            return label, float(scores.max())
        return svm_predict(self.model, query)

    def predict_many(self, Q) -> list[tuple[str, float]]:
        return [self.predict(q) for q in np.atleast_2d(Q)]

    @property
    def dim(self) -> int:
        m = self.model
        if self.kind == "knn":
            return m.features.shape[1]
        if self.kind == "ann":
            return m.w1.shape[0]
        return next((s.support.shape[1] for s in m.machines if s.support.size), 0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "vocabulary": list(self.vocabulary), "hyperparams": self.hyperparams}
        m = self.model
        if self.kind == "knn":
            d["model"] = {"k": m.k, "labels": m.labels, "shape": list(m.features.shape),
                          "features": encode_array(m.features)}
        elif self.kind == "ann":
            d["model"] = {
                "classes": m.classes, "rate": m.rate, "epochs": m.epochs, "seed": m.seed,
                "shapes": [list(a.shape) for a in (m.w1, m.b1, m.w2, m.b2)],
                "arrays": [encode_array(a) for a in (m.w1, m.b1, m.w2, m.b2)],
            }
        else:
            d["model"] = {"classes": m.classes, "machines": [
                {"kernel": s.kernel.to_dict(), "c": s.c, "b": s.b,
                 "shape": list(s.support.shape), "support": encode_array(s.support),
                 "y": encode_array(s.y), "alpha": encode_array(s.alpha)}
                for s in m.machines]}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        kind = d["kind"]
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        md = d["model"]
        if kind == "knn":
            model = KnnModel(decode_array(md["features"], tuple(md["shape"])), list(md["labels"]), int(md["k"]))
        elif kind == "ann":
            arrays = [decode_array(s, tuple(shape)) for s, shape in zip(md["arrays"], md["shapes"])]
            model = MlpModel(*arrays, classes=list(md["classes"]), rate=md["rate"],
                             epochs=md["epochs"], seed=md["seed"])
        else:
            machines = []
            for s in md["machines"]:
                shape = tuple(s["shape"])
                kd = s["kernel"]
                machines.append(SvmBinary(
                    decode_array(s["support"], shape), decode_array(s["y"], (shape[0],)),
                    decode_array(s["alpha"], (shape[0],)), float(s["b"]),
                    KernelSpec(kd["kind"], kd["gamma"], int(kd["degree"])), float(s["c"])))
            model = SvmModel(list(md["classes"]), machines)
        return cls(kind, model, tuple(d["vocabulary"]), dict(d["hyperparams"]))


def multiclass_train(data: LabeledDataset, kind: str, hyperparams: dict | None = None) -> TrainedModel:
    hp = dict(hyperparams or {})
    if len(data.classes) < 2:
        raise TrainingError("need at least two classes")
    if kind == "knn":
        model = knn_train(data, int(hp.setdefault("k", 5)))
    elif kind == "ann":
        model = mlp_train(data, int(hp.setdefault("hidden", 64)), float(hp.setdefault("rate", 0.1)),
                          int(hp.setdefault("epochs", 500)), int(hp.setdefault("seed", 0)))
    elif kind == "svm":
        kernel = KernelSpec(hp.setdefault("kernel", "rbf"), hp.setdefault("gamma", None),
                            int(hp.setdefault("degree", 3)))
        model = svm_train(data, kernel, float(hp.setdefault("c", 10.0)), float(hp.setdefault("tol", 1e-3)),
                          int(hp.setdefault("seed", 0)))
    else:
        raise ValueError(f"unknown classifier kind {kind!r}")
    return TrainedModel(kind, model, tuple(data.vocabulary), hp)
