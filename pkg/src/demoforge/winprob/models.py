"""Win-probability models, trained from scratch in numpy.

Four learners share one interface: logistic regression, a one-hidden-layer
MLP, Newton-boosted depth-limited trees and a Deep Sets network. Neural
models train with Adam on mini-batches and early-stop on validation log
loss, keeping the best epoch's weights.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import DegenerateLabels, ModelFormatError, NonFiniteLoss
from .features import GameStateSample, set_arrays, vector_arrays

log = logging.getLogger(__name__)

FORMAT = "demoforge-winprob"
FORMAT_VERSION = 1
P_EPS = 1e-12

KINDS = {"logreg": "LogisticRegression", "mlp": "Mlp", "stumps": "BoostedStumps", "deepsets": "DeepSets"}


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def _nll(z: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log likelihood of labels under logits z, computed stably."""
    return float(np.mean(np.logaddexp(0.0, z) - y * z)) if len(y) else 0.0


@dataclass(frozen=True)
class TrainParams:
    hidden: int = 128
    batch_size: int = 32
    lr: float = 1e-3
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    l2: float = 1e-4  # logistic regression only
    max_iter: int = 2000  # logistic regression only
    max_trees: int = 200
    depth: int = 3
    shrinkage: float = 0.1
    reg_lambda: float = 1.0
    max_bins: int = 64


# --- scaling ----------------------------------------------------------------

@dataclass
class MinMaxScaler:
    """Per-feature min-max scaling to [0, 1] over the last axis; constant features map to 0."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "MinMaxScaler":
        flat = X.reshape(-1, X.shape[-1])
        return cls(flat.min(axis=0), flat.max(axis=0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (X - self.lo) / safe, 0.0)

    def to_json(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "MinMaxScaler":
        return cls(np.array(d["min"], dtype=float), np.array(d["max"], dtype=float))


# --- model base -------------------------------------------------------------

@dataclass
class TrainedModel:
    kind: str  # one of KINDS values
    input_kind: str  # "vector" or "set"
    params: dict = field(default_factory=dict)
    scaler: Optional[MinMaxScaler] = None
    training_log: list = field(default_factory=list)
    constant: Optional[float] = None  # set when labels were single-class

    def logits(self, X: np.ndarray) -> np.ndarray:
        if self.constant is not None:
            c = min(max(self.constant, 1e-6), 1 - 1e-6)
            return np.full(len(X), np.log(c / (1 - c)))
        if self.scaler is not None:
            X = self.scaler.transform(X)
        return _FORWARD[self.kind](self.params, X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """P(CT wins) for a feature array of this model's input kind; values lie in (0, 1)."""
        return np.clip(sigmoid(self.logits(np.asarray(X, dtype=float))), P_EPS, 1 - P_EPS)

    def featurize(self, samples: Sequence[GameStateSample]) -> tuple[np.ndarray, np.ndarray]:
        return set_arrays(samples) if self.input_kind == "set" else vector_arrays(samples)

    def predict_samples(self, samples: Sequence[GameStateSample]) -> np.ndarray:
        X, _ = self.featurize(samples)
        return self.predict(X)

    # serialization
    def to_json(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "inputKind": self.input_kind,
            "constant": self.constant,
            "scaling": None if self.scaler is None else self.scaler.to_json(),
            "params": {k: _to_list(v) for k, v in self.params.items()},
            "trainingLog": self.training_log,
        }

    @classmethod
    def from_json(cls, d: dict) -> "TrainedModel":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise ModelFormatError(f"not a {FORMAT} v{FORMAT_VERSION} model file")
        if d.get("kind") not in _FORWARD:
            raise ModelFormatError(f"unknown model kind {d.get('kind')!r}")
        params = {k: _from_list(v) for k, v in d["params"].items()}
        scaler = None if d["scaling"] is None else MinMaxScaler.from_json(d["scaling"])
        return cls(d["kind"], d["inputKind"], params, scaler, d["trainingLog"], d["constant"])

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"), allow_nan=False)


def _to_list(v):
    if isinstance(v, np.ndarray):
        return {"shape": list(v.shape), "dtype": str(v.dtype), "data": v.ravel().tolist()}
    if isinstance(v, list):
        return [_to_list(x) for x in v]
    if isinstance(v, dict):
        return {k: _to_list(x) for k, x in v.items()}
    return v


_ARRAY_KEYS = {"shape", "dtype", "data"}


def _from_list(v):
    if isinstance(v, dict):
        if set(v) == _ARRAY_KEYS:
            return np.array(v["data"], dtype=v["dtype"]).reshape(v["shape"])
        return {k: _from_list(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_from_list(x) for x in v]
    return v


def save_model(model: TrainedModel, path) -> None:
    from ..jsonio import write_bytes_atomic
    write_bytes_atomic(path, model.dumps().encode("utf-8"))


def load_model(path) -> TrainedModel:
    if not os.path.exists(path):
        raise ModelFormatError(f"no model file at {path}")
    try:
        with open(path, "rb") as fh:
            d = json.loads(fh.read())
    except (OSError, ValueError) as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from None
    return TrainedModel.from_json(d)


def _check_labels(y: np.ndarray) -> None:
    if len(y) == 0:
        raise ValueError("training set is empty")
    if np.all(y == y[0]):
        raise DegenerateLabels(f"all {len(y)} training labels are {int(y[0])}")


def _constant(kind: str, input_kind: str, y: np.ndarray) -> TrainedModel:
    rate = float(np.mean(y))
    log.warning("%s: single-class labels, returning a constant model p=%.3f", kind, rate)
    return TrainedModel(kind, input_kind, constant=rate, training_log=[])


def _glorot(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


# --- logistic regression ----------------------------------------------------

def _logreg_forward(p: dict, X: np.ndarray) -> np.ndarray:
    return X @ p["w"] + p["b"]


def logreg_loss_grad(p: dict, X: np.ndarray, y: np.ndarray, l2: float = 0.0):
    z = _logreg_forward(p, X)
    dz = (sigmoid(z) - y) / len(y)
    loss = _nll(z, y) + 0.5 * l2 * float(p["w"] @ p["w"])
    return loss, {"w": X.T @ dz + l2 * p["w"], "b": np.array(dz.sum())}


def train_logreg(train: Sequence[GameStateSample], val: Sequence[GameStateSample] = (),
                 hp: TrainParams = TrainParams()) -> TrainedModel:
    """L2-regularized logistic regression on min-max scaled vectors, full-batch Adam."""
    Xtr, ytr = vector_arrays(train)
    Xva, yva = vector_arrays(val)
    return fit_logreg(Xtr, ytr, Xva, yva, hp)


def fit_logreg(Xtr, ytr, Xva=None, yva=None, hp: TrainParams = TrainParams()) -> TrainedModel:
    kind = KINDS["logreg"]
    try:
        _check_labels(ytr)
    except DegenerateLabels:
        return _constant(kind, "vector", ytr)
    scaler = MinMaxScaler.fit(Xtr)
    X = scaler.transform(Xtr)
    Xv = scaler.transform(Xva) if Xva is not None and len(Xva) else None
    p = {"w": np.zeros(X.shape[1]), "b": np.array(0.0)}
    opt = _Adam(p, lr=0.05)
    history = [_log_entry(0, _nll(_logreg_forward(p, X), ytr), Xv, yva, p, _logreg_forward)]
    prev = np.inf
    for it in range(1, hp.max_iter + 1):
        loss, g = logreg_loss_grad(p, X, ytr, hp.l2)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"logistic regression loss became {loss} at iteration {it}")
        opt.step(p, g)
        if abs(prev - loss) < 1e-10:
            break
        prev = loss
    history.append(_log_entry(it, _nll(_logreg_forward(p, X), ytr), Xv, yva, p, _logreg_forward))
    return TrainedModel(kind, "vector", p, scaler, history)


def _log_entry(epoch, train_loss, Xv, yv, p, forward) -> dict:
    entry = {"epoch": epoch, "trainLoss": train_loss}
    if Xv is not None:
        entry["valLoss"] = _nll(forward(p, Xv), yv)
    return entry


# --- MLP --------------------------------------------------------------------

def _mlp_forward(p: dict, X: np.ndarray) -> np.ndarray:
    return np.tanh(X @ p["W1"] + p["b1"]) @ p["w2"] + p["b2"]


def mlp_loss_grad(p: dict, X: np.ndarray, y: np.ndarray):
    """Mean NLL and its gradient for a tanh hidden layer with a sigmoid output."""
    H = np.tanh(X @ p["W1"] + p["b1"])
    z = H @ p["w2"] + p["b2"]
    dz = (sigmoid(z) - y) / len(y)
    dA = np.outer(dz, p["w2"]) * (1.0 - H * H)
    return _nll(z, y), {"W1": X.T @ dA, "b1": dA.sum(axis=0), "w2": H.T @ dz, "b2": np.array(dz.sum())}


def init_mlp(rng, n_in: int, hidden: int) -> dict:
    return {"W1": _glorot(rng, n_in, hidden, (n_in, hidden)), "b1": np.zeros(hidden),
            "w2": _glorot(rng, hidden, 1, hidden), "b2": np.array(0.0)}


def train_mlp(train: Sequence[GameStateSample], val: Sequence[GameStateSample] = (),
              hp: TrainParams = TrainParams()) -> TrainedModel:
    Xtr, ytr = vector_arrays(train)
    Xva, yva = vector_arrays(val)
    return fit_mlp(Xtr, ytr, Xva, yva, hp)


def fit_mlp(Xtr, ytr, Xva=None, yva=None, hp: TrainParams = TrainParams()) -> TrainedModel:
    kind = KINDS["mlp"]
    try:
        _check_labels(ytr)
    except DegenerateLabels:
        return _constant(kind, "vector", ytr)
    scaler = MinMaxScaler.fit(Xtr)
    rng = np.random.default_rng(hp.seed)
    p = init_mlp(rng, Xtr.shape[1], hp.hidden)
    Xv = scaler.transform(Xva) if Xva is not None and len(Xva) else None
    p, history = _train_minibatch(p, mlp_loss_grad, _mlp_forward, scaler.transform(Xtr), ytr, Xv, yva, hp, rng)
    return TrainedModel(kind, "vector", p, scaler, history)


# --- Deep Sets --------------------------------------------------------------

def canonical_rows(X: np.ndarray) -> np.ndarray:
    """Sort each sample's rows lexicographically.

    Mean pooling is symmetric in exact arithmetic but floating-point sums
    depend on order; a canonical row order makes predictions bit-identical
    under any permutation of the players.
    """
    out = np.empty_like(X)
    for i in range(len(X)):
        out[i] = X[i][np.lexsort(X[i].T[::-1])]
    return out


def _deepsets_forward(p: dict, X: np.ndarray) -> np.ndarray:
    H = np.tanh(canonical_rows(X) @ p["W1"] + p["b1"])
    return H.mean(axis=1) @ p["w2"] + p["b2"]


def deepsets_loss_grad(p: dict, X: np.ndarray, y: np.ndarray):
    """Mean NLL and gradient for encoder tanh(xW1+b1), mean pool, linear decoder, sigmoid."""
    H = np.tanh(X @ p["W1"] + p["b1"])  # (n, k, h)
    P = H.mean(axis=1)
    z = P @ p["w2"] + p["b2"]
    dz = (sigmoid(z) - y) / len(y)
    dA = (dz[:, None, None] * p["w2"][None, None, :] / X.shape[1]) * (1.0 - H * H)
    return _nll(z, y), {
        "W1": np.einsum("nkd,nkh->dh", X, dA),
        "b1": dA.sum(axis=(0, 1)),
        "w2": P.T @ dz,
        "b2": np.array(dz.sum()),
    }


def train_deepsets(train: Sequence[GameStateSample], val: Sequence[GameStateSample] = (),
                   hp: TrainParams = TrainParams()) -> TrainedModel:
    Xtr, ytr = set_arrays(train)
    Xva, yva = set_arrays(val)
    return fit_deepsets(Xtr, ytr, Xva, yva, hp)


def fit_deepsets(Xtr, ytr, Xva=None, yva=None, hp: TrainParams = TrainParams()) -> TrainedModel:
    kind = KINDS["deepsets"]
    try:
        _check_labels(ytr)
    except DegenerateLabels:
        return _constant(kind, "set", ytr)
    scaler = MinMaxScaler.fit(Xtr)  # one scaler over all rows: global and player columns together
    rng = np.random.default_rng(hp.seed)
    p = init_mlp(rng, Xtr.shape[2], hp.hidden)
    Xt = canonical_rows(scaler.transform(Xtr))
    Xv = canonical_rows(scaler.transform(Xva)) if Xva is not None and len(Xva) else None
    p, history = _train_minibatch(p, deepsets_loss_grad, _pooled_forward, Xt, ytr, Xv, yva, hp, rng)
    return TrainedModel(kind, "set", p, scaler, history)


def _pooled_forward(p, X):
    # inputs already in canonical order
    return np.tanh(X @ p["W1"] + p["b1"]).mean(axis=1) @ p["w2"] + p["b2"]


# --- shared mini-batch loop -------------------------------------------------

class _Adam:
    def __init__(self, params: dict, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v, dtype=float) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=float) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _train_minibatch(p: dict, loss_grad: Callable, forward: Callable, X, y, Xv, yv, hp: TrainParams, rng):
    opt = _Adam(p, hp.lr)
    history = [_log_entry(0, _nll(forward(p, X), y), Xv, yv, p, forward)]
    best = {k: v.copy() for k, v in p.items()}
    best_val = history[0].get("valLoss", history[0]["trainLoss"])
    stale = 0
    n = len(y)
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(n)
        for s in range(0, n, hp.batch_size):
            idx = order[s:s + hp.batch_size]
            loss, g = loss_grad(p, X[idx], y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} in epoch {epoch} (batch starting at {s})")
            opt.step(p, g)
        entry = _log_entry(epoch, _nll(forward(p, X), y), Xv, yv, p, forward)
        history.append(entry)
        score = entry.get("valLoss", entry["trainLoss"])
        if score < best_val:
            best_val, stale = score, 0
            best = {k: v.copy() for k, v in p.items()}
        else:
            stale += 1
            if stale >= hp.patience:
                break
    return best, history


# --- boosted trees ----------------------------------------------------------

def _bin_edges(X: np.ndarray, max_bins: int) -> list[np.ndarray]:
    qs = np.linspace(0, 1, max_bins + 1)[1:-1]
    edges = []
    for j in range(X.shape[1]):
        col = X[:, j]
        cand = np.unique(np.quantile(col, qs)) if len(col) else np.array([])
        # a threshold t sends x < t left; thresholds at the minimum split nothing off
        edges.append(cand[cand > col.min()] if len(col) else cand)
    return edges


def _build_tree(B: np.ndarray, offsets: np.ndarray, n_bins: np.ndarray, edges, g, h, depth: int,
                lam: float, shrinkage: float, min_hess: float = 1e-3) -> dict:
    """Grow one depth-limited regression tree on binned features with Newton leaf values."""
    feature, threshold, left, right, value = [], [], [], [], []
    total_bins = int(offsets[-1] + n_bins[-1])
    flat = B + offsets  # per-feature bin ids mapped into one shared index space

    def grow(rows: np.ndarray, d: int) -> int:
        node = len(feature)
        G, H = g[rows].sum(), h[rows].sum()
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(-G / (H + lam) * shrinkage)
        if d == depth or len(rows) < 2:
            return node
        idx = flat[rows].ravel()
        gh = np.bincount(idx, weights=np.repeat(g[rows], B.shape[1]), minlength=total_bins)
        hh = np.bincount(idx, weights=np.repeat(h[rows], B.shape[1]), minlength=total_bins)
        parent = G * G / (H + lam)
        best = (1e-12, -1, -1)
        for j in range(B.shape[1]):
            if n_bins[j] < 2:
                continue
            o = offsets[j]
            GL = np.cumsum(gh[o:o + n_bins[j]])[:-1]
            HL = np.cumsum(hh[o:o + n_bins[j]])[:-1]
            GR, HR = G - GL, H - HL
            with np.errstate(divide="ignore", invalid="ignore"):  # empty sides are masked below
                gain = GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent
            gain[(HL < min_hess) | (HR < min_hess)] = -np.inf
            k = int(np.argmax(gain))
            if gain[k] > best[0]:
                best = (float(gain[k]), j, k)
        _, j, k = best
        if j < 0:
            return node
        go_left = B[rows, j] <= k
        feature[node] = j
        threshold[node] = float(edges[j][k])
        left[node] = grow(rows[go_left], d + 1)
        right[node] = grow(rows[~go_left], d + 1)
        return node

    grow(np.arange(len(g)), 0)
    return {"feature": np.array(feature, dtype=np.int64), "threshold": np.array(threshold),
            "left": np.array(left, dtype=np.int64), "right": np.array(right, dtype=np.int64),
            "value": np.array(value)}


def _tree_predict(t: dict, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int64)
    feat = t["feature"]
    while True:
        f = feat[node]
        inner = f >= 0
        if not inner.any():
            return t["value"][node]
        rows = np.flatnonzero(inner)
        go_left = X[rows, f[rows]] < t["threshold"][node[rows]]
        node[rows] = np.where(go_left, t["left"][node[rows]], t["right"][node[rows]])


def _trees_forward(p: dict, X: np.ndarray) -> np.ndarray:
    z = np.full(len(X), float(p["base"]))
    for t in p["trees"]:
        z += _tree_predict(t, X)
    return z


def train_boosted_stumps(train: Sequence[GameStateSample], val: Sequence[GameStateSample] = (),
                         hp: TrainParams = TrainParams()) -> TrainedModel:
    Xtr, ytr = vector_arrays(train)
    Xva, yva = vector_arrays(val)
    return fit_boosted(Xtr, ytr, Xva, yva, hp)


def fit_boosted(Xtr, ytr, Xva=None, yva=None, hp: TrainParams = TrainParams()) -> TrainedModel:
    """Newton boosting of depth-limited trees on raw features, early-stopped on validation loss."""
    kind = KINDS["stumps"]
    try:
        _check_labels(ytr)
    except DegenerateLabels:
        return _constant(kind, "vector", ytr)
    rate = float(np.mean(ytr))
    base = float(np.log(rate / (1 - rate)))
    edges = _bin_edges(Xtr, hp.max_bins)
    B = np.stack([np.searchsorted(e, Xtr[:, j], side="right") for j, e in enumerate(edges)], axis=1)
    n_bins = np.array([len(e) + 1 for e in edges])
    offsets = np.concatenate([[0], np.cumsum(n_bins)[:-1]])
    has_val = Xva is not None and len(Xva) > 0
    z = np.full(len(ytr), base)
    zv = np.full(len(Xva), base) if has_val else None
    trees: list = []
    history = [{"trees": 0, "trainLoss": _nll(z, ytr), **({"valLoss": _nll(zv, yva)} if has_val else {})}]
    best_n, best_val, stale = 0, history[0].get("valLoss", history[0]["trainLoss"]), 0
    for n in range(1, hp.max_trees + 1):
        pr = sigmoid(z)
        tree = _build_tree(B, offsets, n_bins, edges, pr - ytr, pr * (1 - pr), hp.depth, hp.reg_lambda,
                           hp.shrinkage)
        trees.append(tree)
        z = z + _tree_predict(tree, Xtr)
        entry = {"trees": n, "trainLoss": _nll(z, ytr)}
        if not np.isfinite(entry["trainLoss"]):
            raise NonFiniteLoss(f"boosting loss became {entry['trainLoss']} at tree {n}")
        if has_val:
            zv = zv + _tree_predict(tree, Xva)
            entry["valLoss"] = _nll(zv, yva)
        history.append(entry)
        score = entry.get("valLoss", entry["trainLoss"])
        if score < best_val:
            best_n, best_val, stale = n, score, 0
        else:
            stale += 1
            if stale >= hp.patience:
                break
    params = {"base": base, "trees": trees[:best_n]}
    return TrainedModel(kind, "vector", params, None, history)


_FORWARD = {
    KINDS["logreg"]: _logreg_forward,
    KINDS["mlp"]: _mlp_forward,
    KINDS["stumps"]: _trees_forward,
    KINDS["deepsets"]: _deepsets_forward,
}

TRAINERS = {
    "logreg": train_logreg,
    "mlp": train_mlp,
    "stumps": train_boosted_stumps,
    "deepsets": train_deepsets,
}
