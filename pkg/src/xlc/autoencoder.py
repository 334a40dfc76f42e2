"""Tied-weight deep non-negative autoencoder over a label matrix.

The model is a chain of non-negative coefficient matrices H_1 (p x k_1)
through H_L (k_{L-1} x k_L) with strictly narrowing widths. Encoding is the
left-product V H_1 ... H_L; decoding is the transposed chain, so the
training objective is

    Loss(H_1..H_L) = || V - V H_1...H_L H_L^T...H_1^T ||_F^2
                   = || V - V E E^T ||_F^2,   E = H_1...H_L,

minimized under H_l >= 0 by full-batch projected gradient descent: one
gradient step per layer per epoch (all layers stepped jointly from
gradients at the current iterate), then an entrywise clamp at zero.

With R = V - V E E^T the objective gradient with respect to the collapsed
chain is dLoss/dE = -2 (V^T R E + R^T V E); the per-layer gradient follows
by the chain rule as P_l^T (dLoss/dE) S_l^T where P_l and S_l are the
prefix and suffix products around H_l. The latent code W_L needs no
projection: it is a product of non-negative factors.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeMismatchError, TrainingDivergedError, XlcError
from .matrix import DenseMatrix, LabelMatrix, RngSeed, _mm, make_rng
from .nmf import NmfConfig, nmf_factorize

# A latent representation is just a dense non-negative n x k_L block.
LatentMatrix = DenseMatrix


class EncoderStack:
    """Trained compression model: the ordered coefficient matrices.

    Invariants: at least one layer; every entry >= 0; widths strictly
    decrease and start below the label count p; adjacent shapes chain.
    """

    __slots__ = ("layers", "layer_dims", "p", "training_trace")

    def __init__(self, layers, training_trace=()):
        layers = tuple(layers)
        if not layers:
            raise ConfigError("an encoder stack needs at least one layer")
        dims = []
        prev_cols = None
        for i, h in enumerate(layers):
            if h.values.min(initial=0.0) < 0:
                raise XlcError(f"layer {i + 1} has a negative entry")
            if prev_cols is not None and h.rows != prev_cols:
                raise ShapeMismatchError(
                    f"layer {i + 1} is {h.rows}x{h.cols} but layer {i} has "
                    f"{prev_cols} columns")
            prev_cols = h.cols
            dims.append(h.cols)
        p = layers[0].rows
        widths = [p] + dims
        if any(b >= a for a, b in zip(widths, widths[1:])):
            raise ConfigError(
                f"layer widths {dims} must strictly decrease from p={p}")
        self.layers = layers
        self.layer_dims = tuple(dims)
        self.p = p
        self.training_trace = tuple(float(x) for x in training_trace)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def latent_dim(self) -> int:
        return self.layer_dims[-1]

    def chain(self) -> np.ndarray:
        """Collapsed product E = H_1 ... H_L (p x k_L), left to right."""
        e = self.layers[0].values
        for h in self.layers[1:]:
            e = _mm(e, h.values)
        return e

    def __repr__(self):
        return f"EncoderStack(p={self.p}, dims={list(self.layer_dims)})"


class AeTrainConfig:
    """Training settings for the autoencoder."""

    INIT_SCHEMES = ("random-uniform", "nmf-greedy")

    __slots__ = ("layer_dims", "max_epochs", "learning_rate", "rel_tol",
                 "init_scheme", "seed", "fd_check")

    def __init__(self, layer_dims, max_epochs: int = 2000,
                 learning_rate: float = 1e-3, rel_tol: float = 1e-7,
                 init_scheme: str = "random-uniform",
                 seed: RngSeed | int = 0, fd_check: bool = False):
        layer_dims = tuple(int(k) for k in layer_dims)
        if not layer_dims:
            raise ConfigError("layer_dims must be non-empty")
        if any(k < 1 for k in layer_dims):
            raise ConfigError(f"layer widths must be >= 1, got {layer_dims}")
        if any(b >= a for a, b in zip(layer_dims, layer_dims[1:])):
            raise ConfigError(
                f"layer_dims must be strictly decreasing, got {layer_dims}")
        if learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {learning_rate}")
        if max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {max_epochs}")
        if init_scheme not in self.INIT_SCHEMES:
            raise ConfigError(f"unknown init_scheme {init_scheme!r}, "
                              f"expected one of {self.INIT_SCHEMES}")
        self.layer_dims = layer_dims
        self.max_epochs = int(max_epochs)
        self.learning_rate = float(learning_rate)
        self.rel_tol = float(rel_tol)
        self.init_scheme = init_scheme
        self.seed = seed if isinstance(seed, RngSeed) else RngSeed(seed)
        self.fd_check = bool(fd_check)


def _as_rows(v, p: int) -> np.ndarray:
    """Dense row block with p columns from a LabelMatrix, DenseMatrix or array."""
    if isinstance(v, LabelMatrix):
        if v.n_labels != p:
            raise ShapeMismatchError(
                f"input has {v.n_labels} labels, encoder expects {p}")
        return np.asarray(v.to_csr().todense())
    a = v.values if isinstance(v, DenseMatrix) else np.ascontiguousarray(v, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != p:
        raise ShapeMismatchError(
            f"input shape {a.shape} does not match encoder width p={p}")
    return a


def encode(v_or_rows, stack: EncoderStack) -> LatentMatrix:
    """W_L = V H_1 ... H_L. Non-negative whenever the input rows are.

    Row-independent: permuting input rows permutes output rows bitwise.
    """
    if isinstance(v_or_rows, LabelMatrix):
        if v_or_rows.n_labels != stack.p:
            raise ShapeMismatchError(
                f"input has {v_or_rows.n_labels} labels, encoder expects {stack.p}")
        w = np.asarray(v_or_rows.to_csr() @ stack.layers[0].values)
        rest = stack.layers[1:]
    else:
        w = _as_rows(v_or_rows, stack.p)
        rest = stack.layers
    for h in rest:
        w = _mm(w, h.values)
    return DenseMatrix(w)


def decode(w, stack: EncoderStack) -> DenseMatrix:
    """Map latent rows back: w H_L^T ... H_1^T, shape n x p, entrywise >= 0."""
    a = w.values if isinstance(w, DenseMatrix) else np.ascontiguousarray(w, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != stack.latent_dim:
        shape = a.shape if a.ndim == 2 else (len(a),)
        raise ShapeMismatchError(
            f"latent shape {shape} does not match k_L={stack.latent_dim}")
    for h in reversed(stack.layers):
        a = _mm(a, np.ascontiguousarray(h.values.T))
    return DenseMatrix(a)


def reconstruction_loss(v, stack: EncoderStack) -> float:
    """|| V - decode(encode(V)) ||_F^2."""
    vd = _as_rows(v, stack.p)
    r = vd - decode(encode(vd, stack), stack).values
    return float(np.einsum("ij,ij->", r, r, optimize=False))


def _chain_gradient(vd: np.ndarray, e: np.ndarray) -> np.ndarray:
    """dLoss/dE = -2 (V^T R E + R^T V E) with R = V - V E E^T."""
    ve = _mm(vd, e)
    r = vd - _mm(ve, np.ascontiguousarray(e.T))
    re = _mm(r, e)
    rt = np.ascontiguousarray(r.T)
    vt = np.ascontiguousarray(vd.T)
    return -2.0 * (_mm(vt, re) + _mm(rt, ve))


def _layer_gradients(vd: np.ndarray, layers) -> list[np.ndarray]:
    """All per-layer gradients at the current iterate."""
    mats = [h.values if isinstance(h, DenseMatrix) else h for h in layers]
    e = mats[0]
    prefixes = [None]                       # P_1 is the identity
    for h in mats[1:]:
        prefixes.append(e)
        e = _mm(e, h)
    g = _chain_gradient(vd, e)
    grads = []
    suffix = None                           # S_L is the identity
    for l in range(len(mats) - 1, -1, -1):
        gl = g if prefixes[l] is None else _mm(np.ascontiguousarray(prefixes[l].T), g)
        if suffix is not None:
            gl = _mm(gl, np.ascontiguousarray(suffix.T))
        grads.append(gl)
        suffix = mats[l] if suffix is None else _mm(mats[l], suffix)
    grads.reverse()
    return grads


def ae_gradient(v, stack: EncoderStack, layer_index: int) -> DenseMatrix:
    """Analytic dLoss/dH_l for the 1-based layer_index, Loss = ||V - V E E^T||_F^2."""
    if not 1 <= layer_index <= stack.depth:
        raise XlcError(
            f"layer_index {layer_index} out of range [1, {stack.depth}]")
    vd = _as_rows(v, stack.p)
    return DenseMatrix(_layer_gradients(vd, stack.layers)[layer_index - 1])


def _init_random(p, layer_dims, rng) -> list[np.ndarray]:
    # uniform(0, sqrt(1/k_l)) keeps chain products at O(1) scale
    widths = [p] + list(layer_dims)
    return [rng.uniform(0.0, np.sqrt(1.0 / widths[i + 1]),
                        size=(widths[i], widths[i + 1]))
            for i in range(len(layer_dims))]


def _rescale_init(vd: np.ndarray, layers: list[np.ndarray]) -> list[np.ndarray]:
    """Scale a fresh stack by the least-squares scalar fitting V E E^T to V.

    Guarantees the starting loss is at most ||V||_F^2, so the all-zero
    stack (a fixpoint of the projected update) is never downhill from the
    start. Scale-free: each layer gets the L-th root of the chain factor.
    """
    e = layers[0]
    for h in layers[1:]:
        e = _mm(e, h)
    rec = _mm(_mm(vd, e), np.ascontiguousarray(e.T))
    den = float(np.einsum("ij,ij->", rec, rec, optimize=False))
    if den <= 0.0:
        return layers
    s = float(np.einsum("ij,ij->", vd, rec, optimize=False)) / den
    if s <= 0.0:
        return layers
    t = s ** (0.5 / len(layers))
    return [h * t for h in layers]


def _init_nmf_greedy(v: LabelMatrix, layer_dims, rng) -> list[np.ndarray]:
    """Greedy layer seeding: NMF of V gives H_1 from the transposed
    coefficient factor, NMF of W_1 gives H_2, and so on. Columns are
    normalized to unit length so the tied decoder starts near projection
    scale."""
    layers = []
    current = v
    for k in layer_dims:
        sub_seed = int(rng.integers(0, 2**63))
        factors = nmf_factorize(current, NmfConfig(k=k, seed=sub_seed))
        h = factors.h.values.T.copy()       # (width, k)
        norms = np.sqrt(np.einsum("ij,ij->j", h, h, optimize=False))
        h /= np.where(norms > 0, norms, 1.0)
        layers.append(h)
        w = np.asarray(current.to_csr() @ h)
        current = LabelMatrix.from_dense_array(np.maximum(w, 0.0))
    return layers


def _fd_audit(vd: np.ndarray, layers: list[np.ndarray],
              grads: list[np.ndarray], step: float = 1e-5,
              rel_tol: float = 1e-4, per_layer: int = 8) -> None:
    def loss_at(mats):
        e = mats[0]
        for h in mats[1:]:
            e = _mm(e, h)
        r = vd - _mm(_mm(vd, e), np.ascontiguousarray(e.T))
        return float(np.einsum("ij,ij->", r, r, optimize=False))

    for l, (h, g) in enumerate(zip(layers, grads)):
        flat = np.arange(h.size)
        picks = flat if h.size <= per_layer else flat[:: max(1, h.size // per_layer)][:per_layer]
        for idx in picks:
            i, j = divmod(int(idx), h.shape[1])
            probe = [m.copy() for m in layers]
            probe[l][i, j] = h[i, j] + step
            f_plus = loss_at(probe)
            probe[l][i, j] = h[i, j] - step
            f_minus = loss_at(probe)
            fd = (f_plus - f_minus) / (2 * step)
            denom = max(abs(fd), abs(g[i, j]), 1e-8)
            if abs(fd - g[i, j]) / denom > rel_tol:
                raise XlcError(
                    f"gradient audit failed at layer {l + 1} entry ({i},{j}): "
                    f"analytic {g[i, j]:.6g} vs finite-difference {fd:.6g}")


def train_autoencoder(v: LabelMatrix, cfg: AeTrainConfig) -> EncoderStack:
    """Fit the stack to the label matrix by projected gradient descent.

    All layers take one step per epoch from gradients evaluated at the
    current iterate, then are clamped at zero. The loss is recorded per
    epoch into the training trace (index 0 is the loss at initialization).
    Stops when the relative loss change falls below cfg.rel_tol or when
    max_epochs is reached; a non-finite loss raises TrainingDivergedError
    with the epoch index (the usual cause is a too-large learning rate).
    """
    p = v.n_labels
    if cfg.layer_dims[0] >= p:
        raise ConfigError(
            f"first layer width {cfg.layer_dims[0]} must be < p={p}")
    if v.entry_vals.size and v.entry_vals.min() < 0:
        raise XlcError("V has a negative entry")

    rng = make_rng(cfg.seed)
    vd = np.asarray(v.to_csr().todense())
    if cfg.init_scheme == "random-uniform":
        layers = _rescale_init(vd, _init_random(p, cfg.layer_dims, rng))
    else:
        layers = _init_nmf_greedy(v, cfg.layer_dims, rng)

    lr = cfg.learning_rate

    def loss_of(mats):
        e = mats[0]
        for h in mats[1:]:
            e = _mm(e, h)
        r = vd - _mm(_mm(vd, e), np.ascontiguousarray(e.T))
        return float(np.einsum("ij,ij->", r, r, optimize=False))

    trace = [loss_of(layers)]
    for epoch in range(1, cfg.max_epochs + 1):
        grads = _layer_gradients(vd, layers)
        if cfg.fd_check and epoch == 1:
            _fd_audit(vd, layers, grads)
        layers = [np.maximum(h - lr * g, 0.0) for h, g in zip(layers, grads)]
        cur = loss_of(layers)
        if not np.isfinite(cur):
            raise TrainingDivergedError(
                f"loss became non-finite at epoch {epoch}; "
                f"lower the learning rate (currently {lr})", epoch=epoch)
        prev = trace[-1]
        trace.append(cur)
        if abs(prev - cur) <= cfg.rel_tol * max(prev, 1e-300):
            break

    return EncoderStack([DenseMatrix(h) for h in layers], training_trace=trace)
