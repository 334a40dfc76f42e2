"""Matrix types and deterministic linear-algebra kernels.

Every other module builds on the two storage types here: ``LabelMatrix``
(sparse, row-major, non-negative — holds the instance/label indicator data)
and ``DenseMatrix`` (dense float64 — holds factors, latent codes, and
reconstructions).

Determinism contract: the dense contraction kernel is ``np.einsum`` without
optimization, which runs single-threaded with a fixed left-to-right
accumulation over the shared axis. It never dispatches to BLAS, so results
do not depend on BLAS/OpenMP thread settings and are bitwise reproducible
across runs on the same build. Sparse products go through scipy's
sequential CSR kernels, which have the same property.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import NonNegativityError, ShapeMismatchError, XlcError


class RngSeed:
    """A 64-bit unsigned seed. Same seed => bitwise-identical random streams."""

    __slots__ = ("seed",)

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise XlcError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed

    def __repr__(self):
        return f"RngSeed({self.seed})"

    def __eq__(self, other):
        return isinstance(other, RngSeed) and other.seed == self.seed


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an RngSeed or a plain int."""
    if isinstance(seed, RngSeed):
        seed = seed.seed
    return np.random.Generator(np.random.PCG64(int(seed)))


def _lock(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class DenseMatrix:
    """Dense row-major float64 matrix with finite entries, immutable after
    construction.

    Attributes
    ----------
    values : ndarray, shape (rows, cols)
        Read-only C-contiguous float64 array.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        a = np.ascontiguousarray(values, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeMismatchError(f"DenseMatrix needs a 2-D array, got ndim={a.ndim}")
        if not np.all(np.isfinite(a)):
            raise XlcError("DenseMatrix entries must be finite")
        self.values = _lock(a)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "DenseMatrix":
        return cls(np.zeros((rows, cols)))

    @classmethod
    def identity(cls, n: int) -> "DenseMatrix":
        return cls(np.eye(n))

    def __repr__(self):
        return f"DenseMatrix({self.rows}x{self.cols})"


class LabelMatrix:
    """Sparse non-negative n x p matrix of instance -> label values.

    Entries are held row-major as parallel (row, col, value) arrays. All
    (row, col) pairs are unique and in bounds; values are finite and > 0
    (zero-valued entries are dropped at construction so the stored entry
    set is canonical). ``label_names``, when given, must have length p.
    """

    __slots__ = ("n_rows", "n_labels", "entry_rows", "entry_cols", "entry_vals",
                 "label_names")

    def __init__(self, n_rows: int, n_labels: int, entries, label_names=None):
        if n_rows < 0 or n_labels < 0:
            raise XlcError(f"negative dimensions {n_rows}x{n_labels}")
        entries = list(entries)
        rows = np.array([e[0] for e in entries], dtype=np.int64)
        cols = np.array([e[1] for e in entries], dtype=np.int64)
        vals = np.array([e[2] for e in entries], dtype=np.float64)
        if not np.all(np.isfinite(vals)):
            raise XlcError("LabelMatrix values must be finite")
        if vals.size and vals.min() < 0.0:
            raise NonNegativityError(
                f"LabelMatrix values must be >= 0, min is {vals.min()}")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_labels:
                raise XlcError(
                    f"entry index out of bounds for {n_rows}x{n_labels} matrix")
        keep = vals > 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                i = int(np.argmax(dup))
                raise XlcError(
                    f"duplicate entry at (row={rows[i]}, col={cols[i]})")
        if label_names is not None:
            label_names = tuple(str(s) for s in label_names)
            if len(label_names) != n_labels:
                raise XlcError(
                    f"label_names has length {len(label_names)}, expected {n_labels}")
        self.n_rows = int(n_rows)
        self.n_labels = int(n_labels)
        self.entry_rows = _lock(rows)
        self.entry_cols = _lock(cols)
        self.entry_vals = _lock(vals)
        self.label_names = label_names

    @property
    def entries(self):
        """Row-major list of (row, col, value) triples."""
        return [(int(r), int(c), float(v)) for r, c, v in
                zip(self.entry_rows, self.entry_cols, self.entry_vals)]

    @property
    def nnz(self) -> int:
        return int(self.entry_vals.size)

    def to_csr(self) -> sp.csr_matrix:
        m = sp.csr_matrix(
            (self.entry_vals, (self.entry_rows, self.entry_cols)),
            shape=(self.n_rows, self.n_labels))
        m.sort_indices()
        return m

    @classmethod
    def from_dense_array(cls, a, label_names=None) -> "LabelMatrix":
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return cls(a.shape[0], a.shape[1],
                   zip(r.tolist(), c.tolist(), a[r, c].tolist()),
                   label_names=label_names)

    def __repr__(self):
        return f"LabelMatrix({self.n_rows}x{self.n_labels}, nnz={self.nnz})"


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Deterministic dense product of two float64 2-D arrays.

    Single-threaded einsum contraction: for each output element the shared
    axis is accumulated in a fixed left-to-right order, independent of any
    worker/thread configuration.
    """
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Exact matrix product a @ b with the deterministic kernel.

    Raises ShapeMismatchError when a.cols != b.rows.
    """
    if a.cols != b.rows:
        raise ShapeMismatchError(
            f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    return DenseMatrix(_mm(a.values, b.values))


def frobenius_norm_sq(a: DenseMatrix) -> float:
    """Sum of squared entries; 0 iff every entry is 0."""
    v = a.values
    return float(np.einsum("ij,ij->", v, v, optimize=False))


def project_nonneg(a: DenseMatrix) -> DenseMatrix:
    """Entrywise max(value, 0) — Euclidean projection onto the non-negative
    orthant. Idempotent."""
    return DenseMatrix(np.maximum(a.values, 0.0))


def sparse_to_dense(v: LabelMatrix) -> DenseMatrix:
    """Expand a LabelMatrix into an equivalent DenseMatrix."""
    a = np.zeros((v.n_rows, v.n_labels))
    a[v.entry_rows, v.entry_cols] = v.entry_vals
    return DenseMatrix(a)


def dense_to_sparse(a: DenseMatrix, tol: float = 0.0,
                    label_names=None) -> LabelMatrix:
    """Convert dense to sparse, dropping |value| <= tol.

    Small negatives in [-tol, 0) are clamped to 0 (dropped). Any entry
    below -tol raises NonNegativityError. With tol=0 the round trip
    sparse -> dense -> sparse reproduces the entry set exactly.
    """
    if tol < 0:
        raise XlcError(f"tol must be >= 0, got {tol}")
    vals = a.values
    if vals.size and vals.min() < -tol:
        raise NonNegativityError(
            f"entry {vals.min()} is below -tol ({-tol}); refusing to clamp")
    r, c = np.nonzero(np.abs(vals) > tol)
    return LabelMatrix(a.rows, a.cols,
                       zip(r.tolist(), c.tolist(), vals[r, c].tolist()),
                       label_names=label_names)
