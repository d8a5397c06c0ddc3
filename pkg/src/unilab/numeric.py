"""Numerically stable primitives on dense 64-bit matrices and ragged batches.

These are the forward kernels; :mod:`unilab.autodiff` wraps them with
derivative rules. Everything here is pure and works on ``float64`` arrays.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import ConfigError, DegenerateVectorError, DimensionError

IMAGE = "image"
REPORT = "report"


def as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a rank-2 matrix, got shape {m.shape}")
    return m


def _as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    return v


def dot(a, b) -> float:
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def cosine(a, b) -> float:
    """Cosine similarity, clamped to [-1, 1]."""
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.sqrt(a @ a), np.sqrt(b @ b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine of a zero-norm vector")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def cosine_matrix(a, b) -> np.ndarray:
    """All pairwise cosines between rows of ``a`` (n x d) and rows of ``b`` (m x d)."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"column mismatch: {a.shape[1]} vs {b.shape[1]}")
    na, nb = row_norms(a), row_norms(b)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise DegenerateVectorError("cosine of a zero-norm row")
    return np.clip((a @ b.T) / np.outer(na, nb), -1.0, 1.0)


def logsumexp(v, axis=None):
    """log(sum(exp(v))) via a max shift; ``axis=1`` reduces each row of a matrix."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise DimensionError("logsumexp of an empty input")
    m = np.max(v, axis=axis, keepdims=True)
    # an all -inf slice would turn into nan under the shift
    m = np.where(np.isneginf(m), 0.0, m)
    with np.errstate(divide="ignore"):  # log(0) = -inf is the right answer there
        out = np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax_rows(m, temperature: float = 1.0) -> np.ndarray:
    if not temperature > 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    x = as_matrix(m) / temperature
    x = x - np.max(x, axis=1, keepdims=True)
    e = np.exp(x)
    return e / np.sum(e, axis=1, keepdims=True)


def normalize_rows_unit(m) -> np.ndarray:
    m = as_matrix(m)
    n = row_norms(m)
    if np.any(n == 0.0):
        raise DegenerateVectorError("cannot normalize a zero row")
    return m / n[:, None]


class RaggedBatch(Sequence):
    """Per-sample local representation matrices of one modality.

    Images carry the same number of rows ``K`` in every sample; reports carry
    ``M_i >= 1`` rows per sample. Elements may be plain arrays or autodiff
    variables, anything with a 2-d ``shape``.
    """

    __slots__ = ("modality", "samples")

    def __init__(self, modality: str, samples):
        if modality not in (IMAGE, REPORT):
            raise ConfigError(f"unknown modality {modality!r}")
        items = tuple(
            as_matrix(s) if isinstance(s, (list, tuple, np.ndarray)) else s for s in samples
        )
        self.modality = modality
        self.samples = items
        self._validate()

    def _validate(self):
        if not self.samples:
            return
        shapes = [tuple(s.shape) for s in self.samples]
        if any(len(s) != 2 for s in shapes):
            raise DimensionError("every sample must be a rank-2 matrix")
        dims = {s[1] for s in shapes}
        if len(dims) != 1:
            raise DimensionError(f"samples disagree on representation dimension: {sorted(dims)}")
        rows = [s[0] for s in shapes]
        if min(rows) < 1:
            raise DimensionError(f"{self.modality} samples need at least one row")
        if self.modality == IMAGE and len(set(rows)) != 1:
            raise DimensionError(f"image samples must share K, got {sorted(set(rows))}")

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def d(self) -> int:
        return self.samples[0].shape[1] if self.samples else 0

    @property
    def sizes(self) -> list[int]:
        return [s.shape[0] for s in self.samples]

    def __repr__(self):
        return f"RaggedBatch({self.modality!r}, n={self.n}, d={self.d}, sizes={self.sizes})"

    def map(self, fn) -> "RaggedBatch":
        return RaggedBatch(self.modality, [fn(s) for s in self.samples])


def ragged(modality: str, samples: Sequence) -> RaggedBatch:
    return samples if isinstance(samples, RaggedBatch) else RaggedBatch(modality, samples)
