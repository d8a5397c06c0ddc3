import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unilab import decomposition as dec
from unilab import losses, verification as ver
from unilab.errors import ConfigError, PreconditionError
from unilab.losses import CrossReps, GlobalReps, LossConfig, WeightSet
from unilab.numeric import REPORT, RaggedBatch, normalize_rows_unit

import oracles

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=25)
@given(seeds)
def test_recomposition_random(seed):
    for kind in (dec.GLOBAL, dec.LOCAL_IMAGE, dec.LOCAL_REPORT):
        assert max(ver.recomposition_errors(kind, 4, seed)) <= 1e-12


def test_global_single_sample_cancels(rng):
    zs, zr = rng.standard_normal((1, 3)), rng.standard_normal((1, 3))
    c = LossConfig(tau=0.2, lam=0.5)
    d = dec.decompose_global(GlobalReps(zs, zr), c)
    cos = float(zs[0] @ zr[0] / np.linalg.norm(zs) / np.linalg.norm(zr))
    assert d.align == pytest.approx(-cos / 0.2, abs=1e-12)
    assert d.dist == pytest.approx(cos / 0.2, abs=1e-12)
    assert d.total == pytest.approx(0.0, abs=1e-12)


def test_global_align_sign(rng):
    zs = np.abs(rng.standard_normal((4, 3)))
    zr = np.abs(rng.standard_normal((4, 3)))
    assert dec.decompose_global(GlobalReps(zs, zr), LossConfig()).align <= 0


def test_local_image_single_region(rng):
    a, b = rng.standard_normal((1, 3)), rng.standard_normal((1, 3))
    w = WeightSet([np.ones(1)], [np.ones(1)], np.eye(1))
    c = LossConfig(tau_prime=0.5)
    d = dec.decompose_local_image([a], CrossReps([b], [a]), w, c)
    cos = float(a[0] @ b[0] / np.linalg.norm(a) / np.linalg.norm(b))
    assert (d.align, d.dist, d.total) == pytest.approx((-cos / 0.5, cos / 0.5, 0.0), abs=1e-12)


def test_local_report_single_sentence(rng):
    a, b = rng.standard_normal((1, 3)), rng.standard_normal((1, 3))
    w = WeightSet([np.ones(1)], [np.ones(1)], np.eye(1))
    d = dec.decompose_local_report([a], CrossReps([a], [b]), w, LossConfig(tau_prime=0.5))
    assert d.total == pytest.approx(0.0, abs=1e-12)
    assert d.align == pytest.approx(-d.dist, abs=1e-12)


def test_local_image_symmetrization(rng):
    k = 4
    zs, zrs = [rng.standard_normal((k, 3))], [rng.standard_normal((k, 3))]
    p = rng.uniform(0, 1, (k, k))
    c = LossConfig(tau_prime=0.3)
    cross = CrossReps(zrs, [rng.standard_normal((2, 3))])
    ws = [np.full(k, 1 / k)]
    wr = [np.full(2, 0.5)]
    a1 = dec.decompose_local_image(zs, cross, WeightSet(ws, wr, p), c).align
    a2 = dec.decompose_local_image(zs, cross, WeightSet(ws, wr, p.T), c).align
    assert a1 == pytest.approx(a2, abs=1e-12)


@settings(max_examples=20)
@given(seeds)
def test_xi_rewrites_match_direct(seed):
    for kind in (dec.GLOBAL, dec.LOCAL_IMAGE, dec.LOCAL_REPORT):
        assert max(ver.xi_rewrite_errors(kind, 3, seed)) <= 1e-10


def test_xi_global_uniform_entries():
    w = WeightSet.uniform(4, [2, 3])
    xi = dec.xi_weights(dec.GLOBAL, w, LossConfig(tau=0.2))
    for m, mat in zip((2, 3), xi.matrices):
        np.testing.assert_allclose(mat, np.full((4, m), 1 / (4 * m * 0.2)), rtol=1e-15)
        assert dec.is_rank_one(mat)


def test_xi_report_separable_alpha_is_rank_one(rng):
    k, m = 5, 3
    col = rng.uniform(0.1, 1, k)
    alpha_sr = np.tile(col / col.sum(), (m, 1))  # every sentence attends the same way
    w = WeightSet([rng.uniform(0, 1, k)], [rng.uniform(0, 1, m)], np.eye(k),
                  alpha_rs=[np.full((k, m), 1 / m)], alpha_sr=[alpha_sr])
    xi = dec.xi_weights(dec.LOCAL_REPORT, w, LossConfig())
    assert dec.is_rank_one(xi.matrices[0])
    assert dec.numerical_rank(xi.matrices[0]) == 1


def test_xi_missing_alpha():
    w = WeightSet.uniform(2, [2])
    with pytest.raises(ConfigError):
        dec.xi_weights(dec.LOCAL_IMAGE, w, LossConfig())
    with pytest.raises(ConfigError):
        dec.xi_weights(dec.LOCAL_REPORT, w, LossConfig())


@settings(max_examples=20)
@given(seeds)
def test_constant_locals_agree(seed):
    assert max(ver.constant_local_diffs(3, seed)) <= 1e-10


def test_constant_local_negative_control():
    assert min(ver.constant_local_diffs(20, 7, constant=False)) > 1e-4


def test_constant_local_temperature_factor():
    # with tau != tau' the local terms scale by tau/tau' relative to the global one
    rng = ver.make_rng(3)
    zs, zr, w, _ = ver._constant_problem(rng, constant=True)
    base = dec.direct_dot_alignments(zs, zr, w, LossConfig(tau=0.2, tau_prime=0.2))
    other = dec.direct_dot_alignments(zs, zr, w, LossConfig(tau=0.2, tau_prime=0.5))
    assert other[dec.GLOBAL] == base[dec.GLOBAL]
    for kind in (dec.LOCAL_IMAGE, dec.LOCAL_REPORT):
        assert other[kind] == pytest.approx(base[kind] * 0.2 / 0.5, rel=1e-12)
        assert other[kind] == pytest.approx(other[dec.GLOBAL] * 0.2 / 0.5, rel=1e-10)


def test_constant_local_reports_violations(rng):
    zs = [rng.standard_normal((3, 2))]
    zr = [rng.standard_normal((2, 2))]
    w = WeightSet.uniform(3, [2], alpha_rs=[np.full((3, 2), 0.5)], alpha_sr=[np.full((2, 3), 1 / 3)])
    rep = dec.constant_local_equivalence_check(zs, zr, w, LossConfig(tau=0.1, tau_prime=0.2))
    assert not rep.passed
    assert len(rep.violations) == 3


@pytest.mark.parametrize("tp", [0.2, 0.5, 1.0])
def test_gauss_offset(tp, rng):
    z = RaggedBatch(REPORT, [normalize_rows_unit(rng.standard_normal((k, 4))) for k in (1, 3, 5)])
    dist, cos = dec.gauss_offset_identity_check(z, tp)
    assert abs(dist - (cos - 1 / tp)) <= 1e-12


def test_gauss_forms_orthogonal_oracle():
    dist, cos = dec.gauss_offset_identity_check([np.eye(2)], 1.0)
    assert abs(dist - oracles.GAUSS_DIST_FORM_ORTHO_T1) <= 1e-12
    assert abs(cos - oracles.GAUSS_COS_FORM_ORTHO_T1) <= 1e-12


def test_gauss_offset_non_unit_rows():
    with pytest.raises(PreconditionError):
        dec.gauss_offset_identity_check([np.array([[2.0, 0.0]])], 0.5)


def test_recompose_perturbation_detected():
    assert max(ver.recomposition_errors(dec.GLOBAL, 5, 0, perturb=1e-6)) > 1e-12


def test_decompose_matches_loss_values(rng):
    g = GlobalReps(rng.standard_normal((3, 4)), rng.standard_normal((3, 4)))
    c = LossConfig(lam=0.3)
    assert dec.decompose_global(g, c).total == losses.global_loss(g, c)
