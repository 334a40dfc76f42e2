"""Dataset files, the binary model container, and the planted generator.

Dataset text format: a header line "n_rows n_features n_labels", then one
line per instance: a comma-separated list of label indices (strictly
increasing, may be empty), followed by whitespace-separated
feature_index:value pairs. An optional sidecar file carries one label
name per line.

Model container: magic "XLC1", a format version, then named sections
(encoder stack, regressor, config, label names, NMF factors), each with
its own CRC-32. All integers and floats are little-endian; matrix
payloads are row-major 64-bit floats, so round-trips are bitwise exact.
"""

from __future__ import annotations

import struct
import warnings
import zlib

import numpy as np

from .autoencoder import EncoderStack
from .errors import ConfigError, DatasetFormatError, ModelFormatError
from .matrix import DenseMatrix, LabelMatrix, RngSeed, make_rng
from .nmf import NmfFactors
from .pipeline import FeatureMatrix, RegressorModel

MAGIC = b"XLC1"
FORMAT_VERSION = 1


# ---------------------------------------------------------------- datasets

def load_dataset(path) -> tuple[FeatureMatrix, LabelMatrix]:
    """Parse a dataset file; every error names the offending line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 3:
        raise DatasetFormatError(
            f"{path}:1: header must be 'n_rows n_features n_labels', "
            f"got {lines[0]!r}")
    try:
        n_rows, d, p = (int(t) for t in head)
    except ValueError:
        raise DatasetFormatError(f"{path}:1: non-integer header field in {lines[0]!r}")
    if n_rows < 0 or d < 1 or p < 1:
        raise DatasetFormatError(
            f"{path}:1: header dims must be positive (rows may be 0), got {lines[0]!r}")
    if len(lines) - 1 != n_rows:
        raise DatasetFormatError(
            f"{path}: header declares {n_rows} rows but file has {len(lines) - 1}")

    x = np.zeros((n_rows, d))
    lab_rows, lab_cols = [], []
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        tokens = line.split()
        start = 0
        if tokens and ":" not in tokens[0]:
            prev = -1
            for part in tokens[0].split(","):
                try:
                    idx = int(part)
                except ValueError:
                    raise DatasetFormatError(
                        f"{path}:{lineno}: bad label index {part!r}")
                if not 0 <= idx < p:
                    raise DatasetFormatError(
                        f"{path}:{lineno}: label index {idx} out of range [0, {p})")
                if idx <= prev:
                    raise DatasetFormatError(
                        f"{path}:{lineno}: label indices must be strictly "
                        f"increasing, got {idx} after {prev}")
                prev = idx
                lab_rows.append(i)
                lab_cols.append(idx)
            start = 1
        seen = set()
        for tok in tokens[start:]:
            f, sep, val = tok.partition(":")
            if not sep:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected feature_index:value, got {tok!r}")
            try:
                j = int(f)
                fv = float(val)
            except ValueError:
                raise DatasetFormatError(
                    f"{path}:{lineno}: bad feature pair {tok!r}")
            if not 0 <= j < d:
                raise DatasetFormatError(
                    f"{path}:{lineno}: feature index {j} out of range [0, {d})")
            if j in seen:
                raise DatasetFormatError(
                    f"{path}:{lineno}: duplicate feature index {j}")
            if not np.isfinite(fv):
                raise DatasetFormatError(
                    f"{path}:{lineno}: non-finite feature value {val!r}")
            seen.add(j)
            x[i, j] = fv

    v = LabelMatrix(n_rows, p,
                    ((r, c, 1.0) for r, c in zip(lab_rows, lab_cols)))
    return FeatureMatrix(x), v


def save_dataset(path, x: FeatureMatrix, v: LabelMatrix) -> None:
    """Write the text format; reloading reproduces both matrices exactly."""
    if x.rows != v.n_rows:
        raise ConfigError(f"feature rows {x.rows} != label rows {v.n_rows}")
    per_row_labels = [[] for _ in range(v.n_rows)]
    for r, c in zip(v.entry_rows, v.entry_cols):
        per_row_labels[r].append(int(c))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{x.rows} {x.cols} {v.n_labels}\n")
        for i in range(x.rows):
            parts = []
            if per_row_labels[i]:
                parts.append(",".join(str(c) for c in per_row_labels[i]))
            row = x.values[i]
            for j in np.nonzero(row)[0]:
                parts.append(f"{j}:{float(row[j])!r}")
            fh.write(" ".join(parts) + "\n")


def load_label_names(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.endswith("\n"):
        text = text[:-1]
    return text.split("\n") if text else []


def save_label_names(path, names) -> None:
    names = list(names)
    for name in names:
        if "\n" in name:
            raise ConfigError(f"label name {name!r} contains a newline")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name in names:
            fh.write(name + "\n")


def make_block_dataset(blocks: int, rows: int, labels_per_block: int,
                       noise: float, seed: RngSeed | int = 0):
    """Planted generator: each row belongs to one block, carries that
    block's labels with each of the p bits flipped with probability
    `noise`, and a one-hot block-indicator feature vector.

    Returns (FeatureMatrix, LabelMatrix, label_names).
    """
    if blocks < 1 or rows < 1 or labels_per_block < 1:
        raise ConfigError(
            f"blocks, rows and labels_per_block must be >= 1, got "
            f"{blocks}, {rows}, {labels_per_block}")
    if not 0.0 <= noise < 0.5:
        raise ConfigError(f"noise must be in [0, 0.5), got {noise}")
    p = blocks * labels_per_block
    rng = make_rng(seed if isinstance(seed, RngSeed) else RngSeed(seed))
    block_of = rng.integers(0, blocks, size=rows)
    dense = np.zeros((rows, p))
    for i in range(rows):
        b = int(block_of[i])
        base = np.zeros(p)
        base[b * labels_per_block:(b + 1) * labels_per_block] = 1.0
        flips = rng.random(p) < noise
        dense[i] = np.where(flips, 1.0 - base, base)
    names = [f"block{b}_label{j}"
             for b in range(blocks) for j in range(labels_per_block)]
    x = FeatureMatrix.one_hot(block_of, blocks)
    return x, LabelMatrix.from_dense_array(dense, label_names=names), names


# ----------------------------------------------------------- model format

class ModelContainer:
    """Everything a pipeline run may persist, by named section."""

    __slots__ = ("encoder", "regressor", "config", "label_names", "nmf")

    def __init__(self, encoder: EncoderStack | None = None,
                 regressor: RegressorModel | None = None,
                 config: dict | None = None,
                 label_names=None,
                 nmf: NmfFactors | None = None):
        self.encoder = encoder
        self.regressor = regressor
        self.config = dict(config or {})
        self.label_names = list(label_names) if label_names is not None else None
        self.nmf = nmf


def _pack_matrix(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    return struct.pack("<II", a.shape[0], a.shape[1]) + a.tobytes()


def _unpack_matrix(buf: bytes, off: int, section: str):
    rows, cols = _unpack(buf, off, "<II", section)
    off += 8
    nbytes = rows * cols * 8
    if off + nbytes > len(buf):
        raise ModelFormatError(f"truncated matrix payload in section {section!r}")
    a = np.frombuffer(buf[off:off + nbytes], dtype="<f8").reshape(rows, cols).copy()
    return a, off + nbytes


def _pack_trace(trace) -> bytes:
    a = np.asarray(trace, dtype="<f8")
    return struct.pack("<Q", a.size) + a.tobytes()


def _unpack_trace(buf: bytes, off: int, section: str):
    (n,) = _unpack(buf, off, "<Q", section)
    off += 8
    if off + n * 8 > len(buf):
        raise ModelFormatError(f"truncated trace in section {section!r}")
    return np.frombuffer(buf[off:off + n * 8], dtype="<f8").tolist(), off + n * 8


def _unpack(buf: bytes, off: int, fmt: str, section: str):
    size = struct.calcsize(fmt)
    if off + size > len(buf):
        raise ModelFormatError(f"truncated header in section {section!r}")
    return struct.unpack_from(fmt, buf, off)


def _encoder_payload(stack: EncoderStack) -> bytes:
    out = [struct.pack("<I", stack.depth)]
    out += [_pack_matrix(h.values) for h in stack.layers]
    out.append(_pack_trace(stack.training_trace))
    return b"".join(out)


def _parse_encoder(buf: bytes) -> EncoderStack:
    (depth,) = _unpack(buf, 0, "<I", "encoder")
    off = 4
    layers = []
    for _ in range(depth):
        a, off = _unpack_matrix(buf, off, "encoder")
        layers.append(DenseMatrix(a))
    trace, off = _unpack_trace(buf, off, "encoder")
    return EncoderStack(layers, training_trace=trace)


def _regressor_payload(m: RegressorModel) -> bytes:
    out = [struct.pack("<BII", RegressorModel.KINDS.index(m.kind),
                       m.input_dim, m.output_dim),
           struct.pack("<I", len(m.params))]
    for name in sorted(m.params):
        raw = name.encode("utf-8")
        a = m.params[name]
        a2 = a.reshape(1, -1) if a.ndim == 1 else a
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", a.ndim))
        out.append(_pack_matrix(a2))
    return b"".join(out)


def _parse_regressor(buf: bytes) -> RegressorModel:
    kind_idx, din, dout = _unpack(buf, 0, "<BII", "regressor")
    if kind_idx >= len(RegressorModel.KINDS):
        raise ModelFormatError(f"unknown regressor kind code {kind_idx}")
    (nparams,) = _unpack(buf, 9, "<I", "regressor")
    off = 13
    params = {}
    for _ in range(nparams):
        (nlen,) = _unpack(buf, off, "<H", "regressor")
        off += 2
        if off + nlen > len(buf):
            raise ModelFormatError("truncated parameter name in section 'regressor'")
        name = buf[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = _unpack(buf, off, "<B", "regressor")
        off += 1
        a, off = _unpack_matrix(buf, off, "regressor")
        params[name] = a[0] if ndim == 1 else a
    return RegressorModel(RegressorModel.KINDS[kind_idx], din, dout, params)


def _config_payload(config: dict) -> bytes:
    lines = []
    for key in sorted(config):
        key_s, val_s = str(key), str(config[key])
        if any(ch in key_s or ch in val_s for ch in ("\n", "=")):
            raise ConfigError(f"config entry {key_s!r} contains '=' or newline")
        lines.append(f"{key_s}={val_s}")
    return "\n".join(lines).encode("utf-8")


def _parse_config(buf: bytes) -> dict:
    text = buf.decode("utf-8")
    config = {}
    for line in text.split("\n"):
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ModelFormatError(f"bad config line {line!r}")
        config[key] = val
    return config


def _names_payload(names) -> bytes:
    for name in names:
        if "\n" in name:
            raise ConfigError(f"label name {name!r} contains a newline")
    return "\n".join(names).encode("utf-8")


def _parse_names(buf: bytes) -> list[str]:
    text = buf.decode("utf-8")
    return text.split("\n") if text else []


def _nmf_payload(f: NmfFactors) -> bytes:
    return (_pack_matrix(f.w.values) + _pack_matrix(f.h.values)
            + _pack_trace(f.objective_trace))


def _parse_nmf(buf: bytes) -> NmfFactors:
    w, off = _unpack_matrix(buf, 0, "nmf")
    h, off = _unpack_matrix(buf, off, "nmf")
    trace, off = _unpack_trace(buf, off, "nmf")
    return NmfFactors(DenseMatrix(w), DenseMatrix(h), trace)


_SECTION_WRITERS = (
    ("encoder", lambda c: c.encoder, _encoder_payload),
    ("regressor", lambda c: c.regressor, _regressor_payload),
    ("config", lambda c: c.config or None, _config_payload),
    ("label_names", lambda c: c.label_names, _names_payload),
    ("nmf", lambda c: c.nmf, _nmf_payload),
)


def save_model(path, container: ModelContainer) -> None:
    """Write the container; section payloads carry individual CRC-32s."""
    sections = []
    for name, get, pack in _SECTION_WRITERS:
        value = get(container)
        if value is not None:
            sections.append((name, pack(value)))
    out = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(sections))]
    for name, payload in sections:
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<QI", len(payload), zlib.crc32(payload)))
        out.append(payload)
    blob = b"".join(out)
    with open(path, "wb") as fh:
        fh.write(blob)


_SECTION_PARSERS = {
    "encoder": ("encoder", _parse_encoder),
    "regressor": ("regressor", _parse_regressor),
    "config": ("config", _parse_config),
    "label_names": ("label_names", _parse_names),
    "nmf": ("nmf", _parse_nmf),
}


def load_model(path) -> ModelContainer:
    """Read a container back; unknown sections are skipped with a warning."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    if len(buf) < 12:
        raise ModelFormatError(f"{path}: truncated file")
    version, n_sections = struct.unpack_from("<II", buf, 4)
    if version > FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format version {version} is newer than supported "
            f"version {FORMAT_VERSION}")
    off = 12
    fields = {}
    for _ in range(n_sections):
        if off + 2 > len(buf):
            raise ModelFormatError(f"{path}: truncated section table")
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        if off + nlen + 12 > len(buf):
            raise ModelFormatError(f"{path}: truncated section header")
        name = buf[off:off + nlen].decode("utf-8")
        off += nlen
        plen, crc = struct.unpack_from("<QI", buf, off)
        off += 12
        if off + plen > len(buf):
            raise ModelFormatError(f"{path}: truncated payload in section {name!r}")
        payload = buf[off:off + plen]
        off += plen
        if zlib.crc32(payload) != crc:
            raise ModelFormatError(f"{path}: checksum mismatch in section {name!r}")
        if name not in _SECTION_PARSERS:
            warnings.warn(f"{path}: skipping unknown section {name!r}")
            continue
        field, parse = _SECTION_PARSERS[name]
        fields[field] = parse(payload)
    return ModelContainer(**fields)
