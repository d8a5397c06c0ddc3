"""Global and local image-text contrastive losses and per-sample uniformity regularizers.

All functions are written against :mod:`unilab.autodiff` ops, so they accept
plain arrays (returning floats) or tape variables (returning a variable).
Cosine similarity is the default pairwise score; ``similarity="dot"`` swaps
in raw dot products, which the decomposition checks need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError, EmptyBatchError
from .numeric import IMAGE, REPORT, RaggedBatch, ragged

COSINE = "cosine"
DOT = "dot"

GAUSS = "gauss"
XENT = "xent"

# uniformity coefficient per variant, tuned in the original ablations
DEFAULT_ETA = {GAUSS: 0.25, XENT: 0.5}
# the two local temperatures kept per variant for the main comparison
DEFAULT_TAU_PRIME = {GAUSS: (0.2, 0.5), XENT: (0.2, 0.3)}


@dataclass(frozen=True)
class LossConfig:
    """Scalar hyperparameters shared by every loss.

    ``lam``, ``gamma``, ``mu`` and ``nu`` default to placeholders (0.5, 1, 1, 1);
    ``tau`` = 0.1 is likewise a conventional choice rather than a tuned value.
    """

    tau: float = 0.1
    tau_prime: float = 0.2
    lam: float = 0.5
    gamma: float = 1.0
    mu: float = 1.0
    nu: float = 1.0
    eta: float = 0.25

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if not self.tau_prime > 0:
            raise ConfigError(f"tau_prime must be > 0, got {self.tau_prime}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lam must lie in [0, 1], got {self.lam}")
        for name in ("gamma", "mu", "nu", "eta"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be a finite nonnegative number, got {v}")

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "LossConfig":
        if variant not in DEFAULT_ETA:
            raise ConfigError(f"unknown uniformity variant {variant!r}")
        kw = {"eta": DEFAULT_ETA[variant], "tau_prime": DEFAULT_TAU_PRIME[variant][0]}
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class GlobalReps:
    zg_s: object  # N x D
    zg_r: object  # N x D

    def __post_init__(self):
        s, r = np.shape(ad.value_of(self.zg_s)), np.shape(ad.value_of(self.zg_r))
        if len(s) != 2 or s != r:
            raise DimensionError(f"global representations must be matching N x D matrices, got {s} and {r}")

    @property
    def n(self) -> int:
        return np.shape(ad.value_of(self.zg_s))[0]


@dataclass(frozen=True)
class CrossReps:
    z_rs: Sequence  # per sample K x D, report attended onto regions
    z_sr: Sequence  # per sample M_i x D, image attended onto sentences


def _values(xs):
    return [np.asarray(ad.value_of(x)) for x in xs]


@dataclass(frozen=True)
class WeightSet:
    """Local weights, the shared positiveness matrix and attention matrices."""

    w_s: Sequence
    w_r: Sequence
    p_s: object
    alpha_rs: Sequence | None = None  # per sample K x M_i
    alpha_sr: Sequence | None = None  # per sample M_i x K
    normalized: bool = field(default=False)

    def __post_init__(self):
        self.validate()

    def validate(self, tol: float = 1e-10):
        p = np.asarray(ad.value_of(self.p_s))
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise DimensionError(f"p_s must be square, got {p.shape}")
        groups = {"w_s": self.w_s, "w_r": self.w_r, "p_s": [p]}
        for name in ("alpha_rs", "alpha_sr"):
            if getattr(self, name) is not None:
                groups[name] = getattr(self, name)
        for name, items in groups.items():
            for v in _values(items):
                if np.any(v < 0):
                    raise ConfigError(f"{name} has negative entries")
        for name in ("alpha_rs", "alpha_sr"):
            for a in _values(getattr(self, name) or []):
                if np.max(np.abs(a.sum(axis=1) - 1.0)) > tol:
                    raise ConfigError(f"{name} rows must sum to 1")
        if self.normalized:
            for name in ("w_s", "w_r"):
                for v in _values(getattr(self, name)):
                    if abs(v.sum() - 1.0) > tol:
                        raise ConfigError(f"normalized mode: {name} must sum to 1")
            if np.max(np.abs(p.sum(axis=1) - 1.0)) > tol:
                raise ConfigError("normalized mode: p_s rows must sum to 1")

    @classmethod
    def uniform(cls, k: int, sizes: Sequence[int], p_s=None, alpha_rs=None, alpha_sr=None):
        """Uniform local weights (1/K, 1/M_i); identity positiveness unless given."""
        p = np.eye(k) if p_s is None else p_s
        return cls(
            w_s=[np.full(k, 1.0 / k) for _ in sizes],
            w_r=[np.full(m, 1.0 / m) for m in sizes],
            p_s=p,
            alpha_rs=alpha_rs,
            alpha_sr=alpha_sr,
            normalized=np.allclose(np.asarray(ad.value_of(p)).sum(axis=1), 1.0, atol=1e-10, rtol=0),
        )


def similarity_matrix(a, b, similarity: str = COSINE):
    if similarity == COSINE:
        return ad.cosine_matrix(a, b)
    if similarity == DOT:
        return ad.matmul(a, ad.transpose(b))
    raise ConfigError(f"unknown similarity mode {similarity!r}")


def batch_mean(terms):
    """Mean of per-sample scalar terms, reduced in ascending sample order."""
    if not terms:
        raise EmptyBatchError("empty batch")
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.scale(total, 1.0 / len(terms))


def _finish(x):
    return x if isinstance(x, ad.Var) else float(x)


# ---------------------------------------------------------------- global


def global_scores(g: GlobalReps, c: LossConfig, similarity: str = COSINE):
    """Logits matrix S with S[i, j] = sim(image_i, report_j) / tau."""
    if g.n == 0:
        raise EmptyBatchError("global loss over an empty batch")
    return ad.scale(similarity_matrix(g.zg_s, g.zg_r, similarity), 1.0 / c.tau)


def global_loss(g: GlobalReps, c: LossConfig, similarity: str = COSINE):
    s = global_scores(g, c, similarity)
    pos = ad.diagonal(s)
    image_to_report = ad.sub(ad.logsumexp(s, axis=1), pos)
    report_to_image = ad.sub(ad.logsumexp(s, axis=0), pos)
    per_sample = ad.add(ad.scale(image_to_report, c.lam), ad.scale(report_to_image, 1.0 - c.lam))
    return _finish(ad.scale(ad.sum_(per_sample), 1.0 / g.n))


# ---------------------------------------------------------------- local


def _check_local_image(zs, zrs, p_s, w_s):
    if len(zs) == 0:
        raise EmptyBatchError("local image loss over an empty batch")
    if not (len(zs) == len(zrs) == len(w_s)):
        raise DimensionError("zs, z_rs and w_s disagree on batch size")
    k = np.shape(ad.value_of(p_s))[0]
    for i, (a, b, w) in enumerate(zip(zs, zrs, w_s)):
        if a.shape[0] != k or b.shape[0] != k or np.shape(ad.value_of(w))[0] != k:
            raise DimensionError(f"sample {i}: K mismatch between zs {a.shape}, z_rs {b.shape} and p_s ({k})")


def local_image_loss(zs, cross: CrossReps, w: WeightSet, c: LossConfig, similarity: str = COSINE):
    """Region-level NTXent between z^S and z^{R->S} with spatially soft targets."""
    zs = ragged(IMAGE, zs)
    _check_local_image(zs, cross.z_rs, w.p_s, w.w_s)
    p = w.p_s
    row_mass = np.asarray(ad.value_of(p)).sum(axis=1) if not isinstance(p, ad.Var) else ad.sum_(p, axis=1)
    terms = []
    for a, b, wi in zip(zs, cross.z_rs, w.w_s):
        s = ad.scale(similarity_matrix(a, b, similarity), 1.0 / c.tau_prime)
        l1 = ad.sub(ad.mul(row_mass, ad.logsumexp(s, axis=1)), ad.sum_(ad.mul(p, s), axis=1))
        l2 = ad.sub(ad.mul(row_mass, ad.logsumexp(s, axis=0)), ad.sum_(ad.mul(p, ad.transpose(s)), axis=1))
        terms.append(ad.scale(ad.dot(wi, ad.add(l1, l2)), 0.5))
    return _finish(batch_mean(terms))


def local_report_loss(zr, cross: CrossReps, w: WeightSet, c: LossConfig, similarity: str = COSINE):
    """Sentence-level NTXent between z^R and z^{S->R}; the positive is the same index."""
    zr = ragged(REPORT, zr)
    if len(zr) == 0:
        raise EmptyBatchError("local report loss over an empty batch")
    if not (len(zr) == len(cross.z_sr) == len(w.w_r)):
        raise DimensionError("zr, z_sr and w_r disagree on batch size")
    terms = []
    for i, (a, b, wi) in enumerate(zip(zr, cross.z_sr, w.w_r)):
        if a.shape != b.shape or np.shape(ad.value_of(wi))[0] != a.shape[0]:
            raise DimensionError(f"sample {i}: shape mismatch zr {a.shape}, z_sr {b.shape}")
        s = ad.scale(similarity_matrix(a, b, similarity), 1.0 / c.tau_prime)
        pos = ad.diagonal(s)
        l1 = ad.sub(ad.logsumexp(s, axis=1), pos)
        l2 = ad.sub(ad.logsumexp(s, axis=0), pos)
        terms.append(ad.scale(ad.dot(wi, ad.add(l1, l2)), 0.5))
    return _finish(batch_mean(terms))


def lovt_loss(g: GlobalReps, zs, zr, cross: CrossReps, w: WeightSet, c: LossConfig):
    """gamma * global + mu * local-image + nu * local-report; zero-weighted terms are skipped."""
    parts = []
    if c.gamma:
        parts.append(ad.scale(global_loss(g, c), c.gamma))
    if c.mu:
        parts.append(ad.scale(local_image_loss(zs, cross, w, c), c.mu))
    if c.nu:
        parts.append(ad.scale(local_report_loss(zr, cross, w, c), c.nu))
    total = 0.0
    for p in parts:
        total = ad.add(total, p)
    return _finish(total)


# ---------------------------------------------------------------- uniformity


def _self_scores(z, tau_prime):
    return ad.scale(ad.cosine_matrix(z, z), 1.0 / tau_prime)


def uni_gauss(batch: RaggedBatch, tau_prime: float):
    """Mean over samples of log of the mean pairwise exp(cos / tau')."""
    if not tau_prime > 0:
        raise ConfigError("tau_prime must be > 0")
    terms = []
    for z in batch:
        k = z.shape[0]
        terms.append(ad.sub(ad.logsumexp(_self_scores(z, tau_prime)), 2.0 * math.log(k)))
    return _finish(batch_mean(terms))


def uni_xent(batch: RaggedBatch, tau_prime: float):
    """Mean over samples and anchors of logsumexp_k' cos(z_k, z_k') / tau'."""
    if not tau_prime > 0:
        raise ConfigError("tau_prime must be > 0")
    terms = []
    for z in batch:
        k = z.shape[0]
        terms.append(ad.scale(ad.sum_(ad.logsumexp(_self_scores(z, tau_prime), axis=1)), 1.0 / k))
    return _finish(batch_mean(terms))


def uni_gauss_image(zs, tau_prime: float):
    return uni_gauss(ragged(IMAGE, zs), tau_prime)


def uni_gauss_report(zr, tau_prime: float):
    return uni_gauss(ragged(REPORT, zr), tau_prime)


def uni_xent_image(zs, tau_prime: float):
    return uni_xent(ragged(IMAGE, zs), tau_prime)


def uni_xent_report(zr, tau_prime: float):
    return uni_xent(ragged(REPORT, zr), tau_prime)


UNIFORMITY = {GAUSS: uni_gauss, XENT: uni_xent}


def lovt_uni_loss(g: GlobalReps, zs, zr, c: LossConfig, variant: str = GAUSS):
    """gamma * global + eta * (per-sample uniformity of regions + of sentences)."""
    if variant not in UNIFORMITY:
        raise ConfigError(f"unknown uniformity variant {variant!r}")
    uni = UNIFORMITY[variant]
    total = 0.0
    if c.gamma:
        total = ad.scale(global_loss(g, c), c.gamma)
    if c.eta:
        reg = ad.add(uni(ragged(IMAGE, zs), c.tau_prime), uni(ragged(REPORT, zr), c.tau_prime))
        total = ad.add(total, ad.scale(reg, c.eta))
    return _finish(total)
