"""Shallow non-negative factorization V ~ W @ H by multiplicative updates.

Serves three roles: a baseline compressor, a sanity oracle for the deep
model (its objective can never beat the rank-k SVD floor), and an optional
greedy initializer for the encoder stack.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NonNegativityError, ShapeMismatchError, XlcError
from .matrix import DenseMatrix, LabelMatrix, RngSeed, _mm, make_rng


class NmfConfig:
    """Settings for one factorization run.

    k must satisfy 1 <= k < min(n, p); epsilon guards update denominators.
    """

    __slots__ = ("k", "max_iters", "rel_tol", "epsilon", "seed")

    def __init__(self, k: int, max_iters: int = 5000, rel_tol: float = 1e-6,
                 epsilon: float = 1e-12, seed: RngSeed | int = 0):
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        if max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {max_iters}")
        if epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {epsilon}")
        if rel_tol < 0:
            raise ConfigError(f"rel_tol must be >= 0, got {rel_tol}")
        self.k = int(k)
        self.max_iters = int(max_iters)
        self.rel_tol = float(rel_tol)
        self.epsilon = float(epsilon)
        self.seed = seed if isinstance(seed, RngSeed) else RngSeed(seed)


class NmfFactors:
    """Result of a factorization: non-negative W (n x k) and H (k x p),
    plus the objective value recorded after every iteration. The trace
    must be non-increasing up to a slack of 1e-12 per step."""

    __slots__ = ("w", "h", "k", "objective_trace")

    def __init__(self, w: DenseMatrix, h: DenseMatrix, objective_trace):
        if w.cols != h.rows:
            raise ShapeMismatchError(
                f"W is {w.rows}x{w.cols} but H is {h.rows}x{h.cols}")
        if w.values.min(initial=0.0) < 0 or h.values.min(initial=0.0) < 0:
            raise NonNegativityError("NMF factors must be entrywise >= 0")
        trace = tuple(float(x) for x in objective_trace)
        for i in range(len(trace) - 1):
            if trace[i + 1] > trace[i] + 1e-12:
                raise XlcError(
                    f"objective trace increases at step {i + 1}: "
                    f"{trace[i]:.6g} -> {trace[i + 1]:.6g}")
        self.w = w
        self.h = h
        self.k = w.cols
        self.objective_trace = trace


def _objective_dense(v_csr, wh: np.ndarray) -> float:
    # 0.5 * ||V - WH||_F^2 with V available sparsely
    resid = v_csr.toarray() - wh
    return 0.5 * float(np.einsum("ij,ij->", resid, resid, optimize=False))


def nmf_objective(v: LabelMatrix, f: NmfFactors) -> float:
    """0.5 * ||V - WH||_F^2."""
    if f.w.rows != v.n_rows or f.h.cols != v.n_labels:
        raise ShapeMismatchError(
            f"factors give {f.w.rows}x{f.h.cols}, V is {v.n_rows}x{v.n_labels}")
    return _objective_dense(v.to_csr(), _mm(f.w.values, f.h.values))


def nmf_factorize(v: LabelMatrix, cfg: NmfConfig) -> NmfFactors:
    """Factorize V ~ W @ H with Lee-Seung multiplicative updates on the
    halved squared Frobenius loss.

    Each iteration updates H then W; both half-steps are monotone, so the
    recorded objective trace is non-increasing. Initial factors are drawn
    uniform(0.1, 1.0) scaled by sqrt(mean(V)/k) from the seed (W first,
    then H), which keeps every entry strictly positive so the
    multiplicative updates never lock at zero.

    Stops when the relative objective change drops below cfg.rel_tol or
    after cfg.max_iters iterations.
    """
    n, p = v.n_rows, v.n_labels
    if cfg.k >= min(n, p):
        raise ConfigError(f"k={cfg.k} must be < min(n, p) = {min(n, p)}")
    if v.entry_vals.size and v.entry_vals.min() < 0:
        raise NonNegativityError("V has a negative entry")

    vs = v.to_csr()
    mean_v = float(vs.sum()) / max(n * p, 1)
    scale = np.sqrt(mean_v / cfg.k) if mean_v > 0 else 1.0
    rng = make_rng(cfg.seed)
    w = rng.uniform(0.1, 1.0, size=(n, cfg.k)) * scale
    h = rng.uniform(0.1, 1.0, size=(cfg.k, p)) * scale

    eps = cfg.epsilon
    trace = []
    prev = None
    for _ in range(cfg.max_iters):
        # H <- H * (W^T V) / (W^T W H + eps)
        wtv = np.asarray((vs.T @ w).T)          # (k, p), sequential CSC kernel
        wtw = _mm(w.T.copy(), w)
        h *= wtv / (_mm(wtw, h) + eps)
        # W <- W * (V H^T) / (W H H^T + eps)
        vht = np.asarray(vs @ h.T)              # (n, k)
        hht = _mm(h, h.T.copy())
        w *= vht / (_mm(w, hht) + eps)

        obj = _objective_dense(vs, _mm(w, h))
        trace.append(obj)
        if prev is not None and abs(prev - obj) <= cfg.rel_tol * max(prev, 1e-300):
            break
        prev = obj

    return NmfFactors(DenseMatrix(w), DenseMatrix(h), trace)
