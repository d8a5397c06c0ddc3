"""Randomized identity checks behind ``lab verify``.

Each check draws random problems, measures the worst violation of one
identity and compares it with a fixed tolerance. Negative controls invert
the test: they pass when an identity that should *not* hold indeed fails.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import decomposition as dec
from . import losses
from .data import SyntheticDatasetSpec, generate_dataset
from .losses import COSINE, CrossReps, GlobalReps, LossConfig, WeightSet
from .model import FULL, ModelConfig, forward, init_params, positiveness_matrix
from .numeric import IMAGE, REPORT, RaggedBatch

TAUS = (0.1, 0.2, 1.0)
LAMBDAS = (0.0, 0.3, 1.0)
GAUSS_TAUS = (0.2, 0.5, 1.0)

RECOMPOSE_TOL = 1e-12
XI_TOL = 1e-10
EQUIV_TOL = 1e-10
CONTROL_GAP = 1e-4
OFFSET_TOL = 1e-12
GRAD_TOL = 1e-5

CSV_COLUMNS = ("check", "trials", "max_error", "passed")


@dataclass(frozen=True)
class CheckResult:
    check: str
    trials: int
    max_error: float  # for negative controls: the fraction of draws that failed to separate
    passed: bool

    def row(self) -> list[str]:
        return [self.check, str(self.trials), repr(float(self.max_error)), "PASS" if self.passed else "FAIL"]


# ---------------------------------------------------------------- generators


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _simplex_rows(rng, rows, cols):
    x = np.exp(rng.standard_normal((rows, cols)))
    return x / x.sum(axis=1, keepdims=True)


def random_weights(rng, k: int, sizes, normalized: bool = False) -> WeightSet:
    """Positive local weights, positiveness matrix and row-stochastic attention."""
    w_s = [rng.uniform(0.05, 1.0, k) for _ in sizes]
    w_r = [rng.uniform(0.05, 1.0, m) for m in sizes]
    p = rng.uniform(0.0, 1.0, (k, k))
    if normalized:
        w_s = [w / w.sum() for w in w_s]
        w_r = [w / w.sum() for w in w_r]
        p = p / p.sum(axis=1, keepdims=True)
    return WeightSet(w_s, w_r, p,
                     [_simplex_rows(rng, k, m) for m in sizes],
                     [_simplex_rows(rng, m, k) for m in sizes],
                     normalized=normalized)


def random_loss_config(rng) -> LossConfig:
    return LossConfig(tau=float(rng.choice(TAUS)), tau_prime=float(rng.choice(TAUS)),
                      lam=float(rng.choice(LAMBDAS)))


@dataclass
class Problem:
    zs: RaggedBatch
    zr: RaggedBatch
    g: GlobalReps
    cross: CrossReps
    w: WeightSet
    c: LossConfig


def random_problem(rng, n_max=4, k_max=6, m_max=5, d_max=8, k_min=1, m_min=1) -> Problem:
    """Independent random locals, pooled, cross reps and weights (not composed)."""
    n = int(rng.integers(1, n_max + 1))
    k = int(rng.integers(k_min, k_max + 1))
    d = int(rng.integers(1, d_max + 1))
    sizes = [int(rng.integers(m_min, m_max + 1)) for _ in range(n)]
    zs = RaggedBatch(IMAGE, [rng.standard_normal((k, d)) for _ in range(n)])
    zr = RaggedBatch(REPORT, [rng.standard_normal((m, d)) for m in sizes])
    g = GlobalReps(rng.standard_normal((n, d)), rng.standard_normal((n, d)))
    cross = CrossReps([rng.standard_normal((k, d)) for _ in range(n)],
                      [rng.standard_normal((m, d)) for m in sizes])
    return Problem(zs, zr, g, cross, random_weights(rng, k, sizes), random_loss_config(rng))


def _rel(a, b) -> float:
    return abs(a - b) / max(1.0, abs(a))


# ---------------------------------------------------------------- checks


def recomposition_errors(kind: str, trials: int, seed, perturb: float = 0.0) -> list[float]:
    """|total - (align + dist)| / max(1, |total|) per draw; ``perturb`` adds noise to dist."""
    rng = make_rng(seed)
    errs = []
    for _ in range(trials):
        p = random_problem(rng)
        if kind == dec.GLOBAL:
            r = dec.decompose_global(p.g, p.c)
        elif kind == dec.LOCAL_IMAGE:
            r = dec.decompose_local_image(p.zs, p.cross, p.w, p.c)
        else:
            r = dec.decompose_local_report(p.zr, p.cross, p.w, p.c)
        dist = r.dist + perturb * float(rng.standard_normal()) if perturb else r.dist
        errs.append(_rel(r.total, r.align + dist))
    return errs


def xi_rewrite_errors(kind: str, trials: int, seed) -> list[float]:
    """Directly expanded dot-form alignment vs its xi-weighted rewrite."""
    rng = make_rng(seed)
    errs = []
    for _ in range(trials):
        p = random_problem(rng)
        direct = dec.direct_dot_alignments(p.zs, p.zr, p.w, p.c)[kind]
        rewritten = dec.align_rewritten(p.zs, p.zr, dec.xi_weights(kind, p.w, p.c))
        errs.append(_rel(direct, rewritten))
    return errs


def xi_global_rank_one(trials: int, seed) -> list[float]:
    """Worst marginal-reconstruction residual of the global xi matrices (0 for outer products)."""
    rng = make_rng(seed)
    worst = []
    for _ in range(trials):
        p = random_problem(rng)
        xi = dec.xi_weights(dec.GLOBAL, p.w, p.c)
        res = 0.0
        for m in xi.matrices:
            recon = np.outer(m.sum(axis=1), m.sum(axis=0)) / m.sum()
            res = max(res, float(np.max(np.abs(recon - m))) / max(1.0, float(np.max(np.abs(m)))))
            if not dec.is_rank_one(m):
                res = max(res, 1.0)
        worst.append(res)
    return worst


def xi_local_rank_one_fraction(trials: int, seed) -> float:
    """Fraction of draws where a local xi matrix came out rank-1 (should be rare)."""
    rng = make_rng(seed)
    separable = 0
    for _ in range(trials):
        p = random_problem(rng, n_max=1, k_min=2, m_min=2)
        mats = (dec.xi_weights(dec.LOCAL_IMAGE, p.w, p.c).matrices
                + dec.xi_weights(dec.LOCAL_REPORT, p.w, p.c).matrices)
        if any(dec.numerical_rank(m) <= 1 for m in mats):
            separable += 1
    return separable / trials


def _constant_problem(rng, constant: bool):
    # a single row is trivially constant, so the control draws at least two
    low = 1 if constant else 2
    n = int(rng.integers(1, 5))
    k = int(rng.integers(low, 7))
    d = int(rng.integers(2, 9))
    sizes = [int(rng.integers(low, 6)) for _ in range(n)]

    def unit(rows):
        x = rng.standard_normal((rows, d))
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    if constant:
        zs = [np.repeat(unit(1), k, axis=0) for _ in range(n)]
        zr = [np.repeat(unit(1), m, axis=0) for m in sizes]
    else:
        zs = [unit(k) for _ in range(n)]
        zr = [unit(m) for m in sizes]
    tau = float(rng.choice(TAUS))
    c = LossConfig(tau=tau, tau_prime=tau, lam=float(rng.choice(LAMBDAS)))
    return zs, zr, random_weights(rng, k, sizes, normalized=True), c


def constant_local_diffs(trials: int, seed, constant: bool = True) -> list[float]:
    rng = make_rng(seed)
    diffs = []
    for _ in range(trials):
        zs, zr, w, c = _constant_problem(rng, constant)
        rep = dec.constant_local_equivalence_check(zs, zr, w, c, tol=EQUIV_TOL)
        if constant and rep.violations:
            raise AssertionError(f"generator broke a precondition: {rep.violations}")
        diffs.append(rep.max_diff)
    return diffs


def gauss_offset_errors(tau_prime: float, trials: int, seed) -> list[float]:
    rng = make_rng(seed)
    errs = []
    for _ in range(trials):
        n, k, d = (int(rng.integers(1, 5)), int(rng.integers(1, 7)), int(rng.integers(1, 9)))
        batch = []
        for _ in range(n):
            x = rng.standard_normal((k, d))
            batch.append(x / np.linalg.norm(x, axis=1, keepdims=True))
        dist_form, cos_form = dec.gauss_offset_identity_check(RaggedBatch(IMAGE, batch), tau_prime)
        errs.append(abs((cos_form - dist_form) - 1.0 / tau_prime))
    return errs


def cosine_mode_fraction(trials: int, seed) -> float:
    """Fraction of draws where cosine-mode alignment still matched the dot-form rewrite.

    Rows are scaled away from unit norm, so cosine semantics should break the
    rewrite identities.
    """
    rng = make_rng(seed)
    matched = 0
    for _ in range(trials):
        p = random_problem(rng, k_min=2, m_min=2, d_max=8)
        scale_s = [z * rng.uniform(0.3, 3.0, (z.shape[0], 1)) for z in p.zs]
        scale_r = [z * rng.uniform(0.3, 3.0, (z.shape[0], 1)) for z in p.zr]
        g, cross = dec.compose_representations(scale_s, scale_r, p.w)
        cos_align = {
            dec.GLOBAL: dec.decompose_global(g, p.c, COSINE).align,
            dec.LOCAL_IMAGE: dec.decompose_local_image(scale_s, cross, p.w, p.c, COSINE).align,
            dec.LOCAL_REPORT: dec.decompose_local_report(scale_r, cross, p.w, p.c, COSINE).align,
        }
        gaps = [abs(cos_align[kind] - dec.align_rewritten(scale_s, scale_r, dec.xi_weights(kind, p.w, p.c)))
                for kind in cos_align]
        if min(gaps) <= CONTROL_GAP:
            matched += 1
    return matched / trials


# gradient checks through the toy forward pass

GRADIENT_LOSSES: dict[str, Callable] = {
    "global": lambda o, c: losses.global_loss(o.global_reps, c),
    "local_image": lambda o, c: losses.local_image_loss(o.z_s, o.cross, o.weights, c),
    "local_report": lambda o, c: losses.local_report_loss(o.z_r, o.cross, o.weights, c),
    "uni_gauss": lambda o, c: ad.add(losses.uni_gauss_image(o.z_s, c.tau_prime),
                                     losses.uni_gauss_report(o.z_r, c.tau_prime)),
    "uni_xent": lambda o, c: ad.add(losses.uni_xent_image(o.z_s, c.tau_prime),
                                    losses.uni_xent_report(o.z_r, c.tau_prime)),
    "lovt": lambda o, c: losses.lovt_loss(o.global_reps, o.z_s, o.z_r, o.cross, o.weights, c),
    "lovt_uni_gauss": lambda o, c: losses.lovt_uni_loss(o.global_reps, o.z_s, o.z_r, c, losses.GAUSS),
    "lovt_uni_xent": lambda o, c: losses.lovt_uni_loss(o.global_reps, o.z_s, o.z_r, c, losses.XENT),
}

SMALL_DATA = SyntheticDatasetSpec(n_total=3, grid_h=2, grid_w=3, m_min=1, m_max=3,
                                  d_latent=3, d_input=4, noise_sigma=0.3)


def gradient_pair(loss_name: str, seed, model_cfg: ModelConfig | None = None,
                  loss_cfg: LossConfig | None = None, data: SyntheticDatasetSpec = SMALL_DATA):
    """``(loss value, tape gradients, central differences)`` over every parameter."""
    cfg = model_cfg or ModelConfig(d_input=data.d_input, d_hidden=5, d_rep=4, cross_attention=FULL,
                                   shared_heads=seed % 2 == 0)
    c = loss_cfg or LossConfig(tau=0.5, tau_prime=0.5, lam=0.3)
    ds = generate_dataset(replace(data, seed=seed))
    params = init_params(cfg, seed)
    p_s = positiveness_matrix(data.grid_h, data.grid_w)
    batch = ds.batch()
    fn = GRADIENT_LOSSES[loss_name]

    def builder(P):
        return fn(forward(batch, P, cfg, p_s), c)

    value, g = ad.grad(builder, params)
    return value, g, ad.finite_diff(builder, params, h=1e-5)


def gradient_error(loss_name: str, seed, model_cfg: ModelConfig | None = None,
                   loss_cfg: LossConfig | None = None, data: SyntheticDatasetSpec = SMALL_DATA) -> float:
    """Max relative error of tape gradients vs central differences, all parameters."""
    _, g, fd = gradient_pair(loss_name, seed, model_cfg, loss_cfg, data)
    return ad.max_relative_error(g, fd)


# ---------------------------------------------------------------- suite


def run_suite(perturb: float = 0.0, seed: int = 0, trials: int = 100, grad_trials: int = 2) -> list[CheckResult]:
    out = []

    def add(name, errs, tol, n=None):
        errs = list(errs)
        worst = max(errs) if errs else 0.0
        out.append(CheckResult(name, n or len(errs), worst, worst <= tol))

    for i, kind in enumerate((dec.GLOBAL, dec.LOCAL_IMAGE, dec.LOCAL_REPORT)):
        add(f"recompose_{kind}", recomposition_errors(kind, trials, [seed, 1, i], perturb), RECOMPOSE_TOL)
    for i, kind in enumerate((dec.GLOBAL, dec.LOCAL_IMAGE, dec.LOCAL_REPORT)):
        add(f"xi_rewrite_{kind}", xi_rewrite_errors(kind, trials // 2, [seed, 2, i]), XI_TOL)
    add("xi_global_rank_one", xi_global_rank_one(trials // 2, [seed, 3]), 1e-12)

    frac = xi_local_rank_one_fraction(trials, [seed, 4])
    out.append(CheckResult("xi_local_full_rank_control", trials, frac, frac <= 0.05))

    add("constant_local_equivalence", constant_local_diffs(trials // 5, [seed, 5]), EQUIV_TOL)
    gaps = constant_local_diffs(trials // 5, [seed, 6], constant=False)
    # worst case of a negative control is the smallest separation
    out.append(CheckResult("constant_local_control", len(gaps), min(gaps), min(gaps) > CONTROL_GAP))

    for i, t in enumerate(GAUSS_TAUS):
        add(f"gauss_offset_tau_{t}", gauss_offset_errors(t, trials // 5, [seed, 7, i]), OFFSET_TOL)

    frac = cosine_mode_fraction(trials // 2, [seed, 8])
    out.append(CheckResult("cosine_mode_control", trials // 2, frac, frac <= 0.05))

    for name in GRADIENT_LOSSES:
        add(f"grad_{name}", [gradient_error(name, seed + j) for j in range(grad_trials)], GRAD_TOL)
    return out


def report_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow(r.row())
    return buf.getvalue()
