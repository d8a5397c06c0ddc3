"""Alignment / distribution-prior split of the contrastive losses, and the identities around it.

Every contrastive loss here is ``align + dist``: the alignment part rewards
similar matched pairs, the distribution part is the logsumexp repulsion.
Under dot-product semantics with pooled and cross-modal representations
formed as weighted sums of local rows, each alignment part can be written as
``-(1/N) sum_i sum_k sum_m xi[i][k, m] * dot(zs_ik, zr_im)`` for a
loss-specific weight tensor ``xi``; :func:`xi_weights` builds those tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .errors import ConfigError, DimensionError, PreconditionError
from .losses import COSINE, DOT, CrossReps, GlobalReps, LossConfig, WeightSet
from .numeric import IMAGE, REPORT, logsumexp, ragged, row_norms

GLOBAL = "global"
LOCAL_IMAGE = "local_image"
LOCAL_REPORT = "local_report"


@dataclass(frozen=True)
class DecomposedLoss:
    align: float
    dist: float
    total: float

    @property
    def residual(self) -> float:
        return self.total - (self.align + self.dist)


def _m(x):
    return np.asarray(x, dtype=np.float64)


def _sim(a, b, similarity):
    return _m(losses.similarity_matrix(_m(a), _m(b), similarity))


def decompose_global(g: GlobalReps, c: LossConfig, similarity: str = COSINE) -> DecomposedLoss:
    s = _sim(g.zg_s, g.zg_r, similarity) / c.tau
    n = s.shape[0]
    align = -float(np.trace(s)) / n
    dist = (c.lam * float(np.sum(logsumexp(s, axis=1))) / n
            + (1.0 - c.lam) * float(np.sum(logsumexp(s, axis=0))) / n)
    return DecomposedLoss(align, dist, losses.global_loss(g, c, similarity))


def symmetrized_image_weights(w: WeightSet) -> list[np.ndarray]:
    """Per sample, the K x K matrix (w_k p_kl + w_l p_lk) / 2.

    Cached on the weight set, since both the decomposition and the xi-weights use it.
    """
    cached = w.__dict__.get("_sym_image_weights")
    if cached is None:
        p = _m(w.p_s)
        cached = []
        for wi in w.w_s:
            wp = _m(wi)[:, None] * p
            cached.append(0.5 * (wp + wp.T))
        w.__dict__["_sym_image_weights"] = cached
    return cached


def decompose_local_image(zs, cross: CrossReps, w: WeightSet, c: LossConfig,
                          similarity: str = COSINE) -> DecomposedLoss:
    zs = ragged(IMAGE, zs)
    total = losses.local_image_loss(zs, cross, w, c, similarity)
    row_mass = _m(w.p_s).sum(axis=1)  # all ones for a row-normalized p_s
    align = dist = 0.0
    for a, b, wi, sym in zip(zs, cross.z_rs, w.w_s, symmetrized_image_weights(w)):
        s = _sim(a, b, similarity) / c.tau_prime
        align -= float(np.sum(sym * s))
        dist += 0.5 * float(np.sum(_m(wi) * row_mass * (logsumexp(s, axis=1) + logsumexp(s, axis=0))))
    n = zs.n
    return DecomposedLoss(align / n, dist / n, total)


def decompose_local_report(zr, cross: CrossReps, w: WeightSet, c: LossConfig,
                           similarity: str = COSINE) -> DecomposedLoss:
    zr = ragged(REPORT, zr)
    total = losses.local_report_loss(zr, cross, w, c, similarity)
    align = dist = 0.0
    for a, b, wi in zip(zr, cross.z_sr, w.w_r):
        s = _sim(a, b, similarity) / c.tau_prime
        wi = _m(wi)
        align -= float(wi @ np.diag(s))
        dist += 0.5 * float(wi @ (logsumexp(s, axis=1) + logsumexp(s, axis=0)))
    n = zr.n
    return DecomposedLoss(align / n, dist / n, total)


# ---------------------------------------------------------------- xi rewrite


@dataclass(frozen=True)
class XiWeights:
    variant: str
    matrices: list = field(default_factory=list)  # per sample K x M_i


def xi_weights(variant: str, w: WeightSet, c: LossConfig) -> XiWeights:
    if variant == GLOBAL:
        mats = [np.outer(_m(ws), _m(wr)) / c.tau for ws, wr in zip(w.w_s, w.w_r)]
    elif variant == LOCAL_IMAGE:
        if w.alpha_rs is None:
            raise ConfigError("local_image xi-weights need alpha_rs")
        mats = [sym @ _m(a) / c.tau_prime for sym, a in zip(symmetrized_image_weights(w), w.alpha_rs)]
    elif variant == LOCAL_REPORT:
        if w.alpha_sr is None:
            raise ConfigError("local_report xi-weights need alpha_sr")
        mats = [_m(a).T * _m(wr)[None, :] / c.tau_prime for a, wr in zip(w.alpha_sr, w.w_r)]
    else:
        raise ConfigError(f"unknown xi variant {variant!r}")
    for m in mats:
        if not np.all(np.isfinite(m)):
            raise ConfigError("non-finite xi-weights")
    return XiWeights(variant, mats)


def align_rewritten(zs, zr, xi: XiWeights) -> float:
    """-(1/N) sum_i sum_{k,m} xi_ikm dot(zs_ik, zr_im)."""
    zs, zr = ragged(IMAGE, zs), ragged(REPORT, zr)
    if not (zs.n == zr.n == len(xi.matrices)):
        raise DimensionError("batch size mismatch between zs, zr and xi")
    total = 0.0
    for i, (a, b, x) in enumerate(zip(zs, zr, xi.matrices)):
        if x.shape != (a.shape[0], b.shape[0]):
            raise DimensionError(f"sample {i}: xi shape {x.shape} vs ({a.shape[0]}, {b.shape[0]})")
        total += float(np.sum(x * (_m(a) @ _m(b).T)))
    return -total / zs.n


def compose_representations(zs, zr, w: WeightSet) -> tuple[GlobalReps, CrossReps]:
    """Pooled reps as w-weighted row sums, cross reps as alpha-weighted row sums."""
    zs, zr = ragged(IMAGE, zs), ragged(REPORT, zr)
    if w.alpha_rs is None or w.alpha_sr is None:
        raise ConfigError("composing cross representations needs both attention matrices")
    zg_s = np.stack([_m(ws) @ _m(a) for ws, a in zip(w.w_s, zs)])
    zg_r = np.stack([_m(wr) @ _m(b) for wr, b in zip(w.w_r, zr)])
    z_rs = [_m(al) @ _m(b) for al, b in zip(w.alpha_rs, zr)]
    z_sr = [_m(al) @ _m(a) for al, a in zip(w.alpha_sr, zs)]
    return GlobalReps(zg_s, zg_r), CrossReps(z_rs, z_sr)


def direct_dot_alignments(zs, zr, w: WeightSet, c: LossConfig) -> dict[str, float]:
    """The three alignment components expanded directly, dot-product semantics."""
    g, cross = compose_representations(zs, zr, w)
    return {
        GLOBAL: decompose_global(g, c, DOT).align,
        LOCAL_IMAGE: decompose_local_image(zs, cross, w, c, DOT).align,
        LOCAL_REPORT: decompose_local_report(zr, cross, w, c, DOT).align,
    }


def is_rank_one(m, tol: float = 1e-10) -> bool:
    """Exact outer-product test: rebuild from the row and column marginals."""
    m = _m(m)
    s = m.sum()
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if abs(s) <= tol * scale:
        # zero total mass: marginals say nothing, use singular values instead
        return numerical_rank(m) <= 1
    recon = np.outer(m.sum(axis=1), m.sum(axis=0)) / s
    return float(np.max(np.abs(recon - m))) <= tol * scale


def numerical_rank(m, rtol: float = 1e-10) -> int:
    sv = np.linalg.svd(_m(m), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


# ---------------------------------------------------------------- checks


@dataclass
class EquivalenceReport:
    values: dict
    max_diff: float
    tolerance: float
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations and self.max_diff <= self.tolerance


def constant_local_equivalence_check(zs, zr, w: WeightSet, c: LossConfig,
                                     tol: float = 1e-10) -> EquivalenceReport:
    """Compare the three dot-form alignments when locals are constant per sample.

    Preconditions (constant rows, normalized weights, tau == tau') are checked
    and any violation is listed in the report rather than corrected.
    """
    zs, zr = ragged(IMAGE, zs), ragged(REPORT, zr)
    violations = []
    for name, batch in (("zs", zs), ("zr", zr)):
        for i, z in enumerate(batch):
            z = _m(z)
            if np.max(np.abs(z - z[0])) > 1e-12:
                violations.append(f"{name}[{i}] rows are not constant")
                break
    try:
        WeightSet(w.w_s, w.w_r, w.p_s, w.alpha_rs, w.alpha_sr, normalized=True)
    except ConfigError as e:
        violations.append(str(e))
    if c.tau != c.tau_prime:
        violations.append(f"tau ({c.tau}) != tau_prime ({c.tau_prime})")
    values = direct_dot_alignments(zs, zr, w, c)
    v = list(values.values())
    max_diff = max(abs(a - b) for a in v for b in v)
    return EquivalenceReport(values, max_diff, tol, violations)


def gauss_distance_form(zs, tau_prime: float) -> float:
    """Per-sample Gaussian potential written with squared Euclidean distances."""
    batch = ragged(IMAGE, zs) if not hasattr(zs, "modality") else zs
    total = 0.0
    for z in batch:
        z = _m(z)
        diff = z[:, None, :] - z[None, :, :]
        d2 = np.sum(diff * diff, axis=-1)
        total += logsumexp(-d2 / (2.0 * tau_prime)) - 2.0 * math.log(z.shape[0])
    return total / batch.n


def gauss_offset_identity_check(zs, tau_prime: float) -> tuple[float, float]:
    """Return ``(distance_form, cosine_form)``; on unit rows they differ by 1/tau'."""
    batch = ragged(IMAGE, zs) if not hasattr(zs, "modality") else zs
    for i, z in enumerate(batch):
        dev = float(np.max(np.abs(row_norms(_m(z)) - 1.0)))
        if dev > 1e-8:
            raise PreconditionError(f"sample {i}: rows are not unit norm (max deviation {dev:.3g})")
    return gauss_distance_form(batch, tau_prime), losses.uni_gauss(batch, tau_prime)
