"""Feature-to-latent regression, ranked decoding, and ranking metrics.

Step two of the pipeline: a regressor maps pre-extracted feature vectors
to the non-negative latent codes produced by the autoencoder, predictions
are decoded back to full-length label score vectors, and rankings are
scored with precision@k / nDCG@k.
"""

from __future__ import annotations

import numpy as np

from .autoencoder import EncoderStack, decode
from .errors import ConfigError, ShapeMismatchError, TrainingDivergedError, XlcError
from .matrix import DenseMatrix, RngSeed, _mm, make_rng


class FeatureMatrix(DenseMatrix):
    """Dense n x d block of pre-extracted feature rows."""

    @property
    def n_features(self) -> int:
        return self.cols

    @classmethod
    def one_hot(cls, indices, n_features: int) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n_features):
            raise ConfigError(
                f"one-hot index out of range [0, {n_features})")
        a = np.zeros((idx.size, n_features))
        a[np.arange(idx.size), idx] = 1.0
        return cls(a)


class RegressorModel:
    """Fitted feature-to-latent map with an identity output head.

    kind is "ridge-linear" (closed form, with intercept) or "mlp-1hidden"
    (one rectifier hidden layer, identity output, full-batch gradient
    descent). Parameters are immutable after fitting.
    """

    KINDS = ("ridge-linear", "mlp-1hidden")

    __slots__ = ("kind", "input_dim", "output_dim", "params")

    def __init__(self, kind: str, input_dim: int, output_dim: int, params):
        if kind not in self.KINDS:
            raise ConfigError(f"unknown regressor kind {kind!r}, "
                              f"expected one of {self.KINDS}")
        self.kind = kind
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        locked = {}
        for name, a in params.items():
            a = np.ascontiguousarray(a, dtype=np.float64)
            a.setflags(write=False)
            locked[name] = a
        self.params = locked
        if kind == "ridge-linear":
            theta, b = locked["theta"], locked["intercept"]
            if theta.shape != (self.input_dim, self.output_dim) or b.shape != (self.output_dim,):
                raise ShapeMismatchError(
                    f"ridge parameter shapes {theta.shape}, {b.shape} do not "
                    f"chain {self.input_dim} -> {self.output_dim}")
        else:
            w1, b1, w2, b2 = (locked[k] for k in ("w1", "b1", "w2", "b2"))
            h = w1.shape[1]
            if (w1.shape != (self.input_dim, h) or b1.shape != (h,)
                    or w2.shape != (h, self.output_dim) or b2.shape != (self.output_dim,)):
                raise ShapeMismatchError(
                    f"mlp parameter shapes do not chain "
                    f"{self.input_dim} -> {h} -> {self.output_dim}")

    def raw_outputs(self, rows: np.ndarray) -> np.ndarray:
        """Identity-head outputs for a dense row block, no clamping."""
        if self.kind == "ridge-linear":
            return _mm(rows, self.params["theta"]) + self.params["intercept"]
        hidden = np.maximum(_mm(rows, self.params["w1"]) + self.params["b1"], 0.0)
        return _mm(hidden, self.params["w2"]) + self.params["b2"]

    def __repr__(self):
        return (f"RegressorModel(kind={self.kind!r}, "
                f"d={self.input_dim}, k={self.output_dim})")


class RankedPrediction:
    """Decoded label scores plus the top-N ranking.

    top_n holds (label_index, score) pairs in descending score order,
    ties broken by ascending label index; its length is min(N, p).
    """

    __slots__ = ("scores", "top_n")

    def __init__(self, scores: np.ndarray, n: int):
        scores = np.ascontiguousarray(scores, dtype=np.float64)
        if scores.ndim != 1:
            raise ShapeMismatchError(f"scores must be a vector, got shape {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise XlcError("scores contain a non-finite value")
        if scores.size and scores.min() < 0:
            raise XlcError("scores contain a negative value")
        if n < 1:
            raise ConfigError(f"top-N count must be >= 1, got {n}")
        scores.setflags(write=False)
        self.scores = scores
        order = rank_labels(scores)
        self.top_n = tuple((int(j), float(scores[j])) for j in order[:min(n, scores.size)])


def rank_labels(scores: np.ndarray) -> np.ndarray:
    """Total order over labels: descending score, ascending index on ties."""
    idx = np.arange(scores.size)
    return np.lexsort((idx, -scores))


def fit_regressor(x: FeatureMatrix, w: DenseMatrix, kind: str = "ridge-linear",
                  hyperparams=None, seed: RngSeed | int = 0) -> RegressorModel:
    """Fit the feature-to-latent regressor; deterministic given the seed.

    ridge-linear solves min ||X Theta - W||_F^2 + lam ||Theta||_F^2 in
    closed form on column-centered data, so the intercept absorbs the
    column means and is not penalized. mlp-1hidden trains a single
    rectifier hidden layer by full-batch gradient descent.

    Hyperparameters (all optional): lam (ridge, default 1e-3); hidden
    (mlp width, default 64), learning_rate (default 1e-3), max_epochs
    (default 500).
    """
    hp = dict(hyperparams or {})
    if x.rows != w.rows:
        raise ShapeMismatchError(
            f"feature rows {x.rows} != latent rows {w.rows}")
    if w.values.size and w.values.min() < 0:
        raise XlcError("latent targets have a negative entry")
    xv, wv = x.values, w.values
    d, k = x.cols, w.cols

    if kind == "ridge-linear":
        lam = float(hp.pop("lam", 1e-3))
        if lam < 0:
            raise ConfigError(f"lam must be >= 0, got {lam}")
        _reject_unknown(hp, ("ridge-linear",))
        x_mean = xv.mean(axis=0) if x.rows else np.zeros(d)
        w_mean = wv.mean(axis=0) if x.rows else np.zeros(k)
        xc = xv - x_mean
        wc = wv - w_mean
        gram = _mm(np.ascontiguousarray(xc.T), xc) + lam * np.eye(d)
        rhs = _mm(np.ascontiguousarray(xc.T), wc)
        try:
            theta = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:
            raise XlcError(
                f"normal equations are singular with lam={lam}; "
                f"use a positive lam") from exc
        intercept = w_mean - x_mean @ theta
        return RegressorModel(kind, d, k,
                              {"theta": theta, "intercept": intercept})

    if kind != "mlp-1hidden":
        raise ConfigError(f"unknown regressor kind {kind!r}, "
                          f"expected one of {RegressorModel.KINDS}")
    hidden = int(hp.pop("hidden", 64))
    lr = float(hp.pop("learning_rate", 1e-3))
    max_epochs = int(hp.pop("max_epochs", 500))
    _reject_unknown(hp, ("mlp-1hidden",))
    if hidden < 1 or lr <= 0 or max_epochs < 1:
        raise ConfigError(
            f"mlp hyperparameters out of range: hidden={hidden}, "
            f"learning_rate={lr}, max_epochs={max_epochs}")
    rng = make_rng(seed if isinstance(seed, RngSeed) else RngSeed(seed))
    bound = np.sqrt(1.0 / max(d, 1))
    w1 = rng.uniform(-bound, bound, size=(d, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.uniform(-np.sqrt(1.0 / hidden), np.sqrt(1.0 / hidden),
                     size=(hidden, k))
    b2 = np.zeros(k)
    n = max(x.rows, 1)
    # overflow on the way to divergence is expected and caught below, so the
    # intermediate IEEE warnings are suppressed rather than leaked
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, max_epochs + 1):
            pre = _mm(xv, w1) + b1
            act = np.maximum(pre, 0.0)
            out = _mm(act, w2) + b2
            err = (out - wv) / n
            if not np.all(np.isfinite(err)):
                raise TrainingDivergedError(
                    f"mlp loss became non-finite at epoch {epoch}; "
                    f"lower the learning rate (currently {lr})", epoch=epoch)
            g_w2 = _mm(np.ascontiguousarray(act.T), err)
            g_b2 = err.sum(axis=0)
            back = _mm(err, np.ascontiguousarray(w2.T)) * (pre > 0)
            g_w1 = _mm(np.ascontiguousarray(xv.T), back)
            g_b1 = back.sum(axis=0)
            w1 = w1 - lr * g_w1
            b1 = b1 - lr * g_b1
            w2 = w2 - lr * g_w2
            b2 = b2 - lr * g_b2
    return RegressorModel(kind, d, k, {"w1": w1, "b1": b1, "w2": w2, "b2": b2})


def _reject_unknown(hp: dict, kinds) -> None:
    if hp:
        raise ConfigError(
            f"unknown hyperparameters for {'/'.join(kinds)}: {sorted(hp)}")


def _as_feature_row(x_row, d: int) -> np.ndarray:
    a = np.ascontiguousarray(x_row, dtype=np.float64)
    if a.ndim != 1 or a.size != d:
        shape = a.shape if a.ndim != 1 else (a.size,)
        raise ShapeMismatchError(
            f"feature vector shape {shape} does not match input_dim {d}")
    if not np.all(np.isfinite(a)):
        raise XlcError("feature vector contains a non-finite value")
    return a


def predict_latent(x_row, m: RegressorModel) -> np.ndarray:
    """Latent prediction for one feature vector, clamped at zero.

    The identity head can emit negatives; the clamp keeps the decoder
    input inside the non-negative latent domain.
    """
    a = _as_feature_row(x_row, m.input_dim)
    return np.maximum(m.raw_outputs(a.reshape(1, -1))[0], 0.0)


def predict_labels(x_row, m: RegressorModel, stack: EncoderStack,
                   n: int = 25) -> RankedPrediction:
    """Decode the predicted latent vector to a ranked label list."""
    if n < 1:
        raise ConfigError(f"top-N count must be >= 1, got {n}")
    if m.output_dim != stack.latent_dim:
        raise ShapeMismatchError(
            f"regressor outputs {m.output_dim} dims but decoder expects "
            f"{stack.latent_dim}")
    latent = predict_latent(x_row, m)
    scores = decode(latent.reshape(1, -1), stack).values[0]
    return RankedPrediction(scores, n)


def precision_at_k(pred: RankedPrediction, truth, k: int) -> float:
    """|top-k predicted labels intersected with truth| / k."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    truth = {int(t) for t in truth}
    order = rank_labels(pred.scores)
    hits = sum(1 for j in order[:k] if int(j) in truth)
    return hits / k


def ndcg_at_k(pred: RankedPrediction, truth, k: int) -> float:
    """Normalized discounted cumulative gain with binary gains.

    DCG sums 1/log2(i+2) over ranks i < k whose label is in truth; the
    ideal DCG places min(k, |truth|) hits first.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    truth = {int(t) for t in truth}
    if not truth:
        raise XlcError("ndcg needs a non-empty truth set")
    order = rank_labels(pred.scores)
    dcg = sum(1.0 / np.log2(i + 2) for i, j in enumerate(order[:k])
              if int(j) in truth)
    ideal = sum(1.0 / np.log2(i + 2) for i in range(min(k, len(truth))))
    return float(dcg / ideal)


def split_rows(n_rows: int, test_frac: float = 0.2,
               seed: RngSeed | int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/test row split by seeded shuffle.

    Returns (train_idx, test_idx), each sorted ascending. The test side
    gets floor(n_rows * test_frac) rows.
    """
    if not 0.0 < test_frac < 1.0:
        raise ConfigError(f"test_frac must be in (0, 1), got {test_frac}")
    if n_rows < 2:
        raise ConfigError(f"need at least 2 rows to split, got {n_rows}")
    rng = make_rng(seed if isinstance(seed, RngSeed) else RngSeed(seed))
    perm = rng.permutation(n_rows)
    n_test = int(n_rows * test_frac)
    if n_test < 1 or n_test >= n_rows:
        raise ConfigError(
            f"test_frac {test_frac} leaves an empty split for {n_rows} rows")
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])
