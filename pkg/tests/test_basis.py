import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from gpcinv.basis import (JacobiFamily, MultiIndexSet, TensorBasis, affine_to_canonical, build_basis,
                          canonical_to_affine, gauss_jacobi, jacobi_eval_all, jacobi_from_beta,
                          total_degree_multiindices, univariate_norms)
from gpcinv.distributions import DomainError, ShiftedBeta, rng_stream
from gpcinv.testbed import qmc_design


def _beta_expectation(prior, f):
    # independent route: adaptive quadrature with the Beta weight handled algebraically
    from scipy.integrate import quad

    val, _ = quad(lambda t: float(f(2.0 * t - 1.0)), 0.0, 1.0, weight="alg",
                  wvar=(prior.a - 1.0, prior.b - 1.0), epsabs=1e-14, epsrel=1e-13)
    return val / special.beta(prior.a, prior.b)


def test_jacobi_from_beta_mapping():
    assert jacobi_from_beta(ShiftedBeta(1, 1, 0, 1)) == JacobiFamily(0.0, 0.0, 0)
    assert jacobi_from_beta(ShiftedBeta(2, 2, 3, 7), 4) == JacobiFamily(1.0, 1.0, 4)
    fam = jacobi_from_beta(ShiftedBeta(2, 5, 0, 1), 3)
    assert (fam.alpha, fam.beta) == (4.0, 1.0)


def test_beta_2_5_orthogonality_independent_quadrature():
    pr = ShiftedBeta(2.0, 5.0, -1.0, 3.0)
    fam = jacobi_from_beta(pr, 3)
    for j, k in itertools.combinations(range(4), 2):
        val = _beta_expectation(pr, lambda z: jacobi_eval_all(fam, z)[j] * jacobi_eval_all(fam, z)[k])
        assert abs(val) < 1e-12


def test_affine_map():
    assert affine_to_canonical(2.0, 2.0, 6.0) == -1.0
    assert affine_to_canonical(6.0, 2.0, 6.0) == 1.0
    assert affine_to_canonical(4.0, 2.0, 6.0) == 0.0
    assert affine_to_canonical(8.0, 2.0, 6.0) == 2.0  # mapped linearly, not clipped
    z = np.linspace(-1, 1, 7)
    assert np.allclose(affine_to_canonical(canonical_to_affine(z, -3, 5), -3, 5), z, atol=1e-15)


def test_legendre_values():
    fam = JacobiFamily(0.0, 0.0, 6)
    assert np.array_equal(jacobi_eval_all(fam, 1.0), np.ones(7))
    assert np.allclose(jacobi_eval_all(fam, -1.0), (-1.0) ** np.arange(7), atol=1e-14)
    assert jacobi_eval_all(fam, 0.5)[2] == pytest.approx(-0.125, abs=1e-15)


@pytest.mark.parametrize("alpha,beta", [(0, 0), (1, 1), (4, 1), (-0.5, 2.5), (3.2, -0.7)])
def test_recurrence_matches_scipy(alpha, beta):
    fam = JacobiFamily(alpha, beta, 6)
    z = np.linspace(-1, 1, 41)
    tab = jacobi_eval_all(fam, z)
    assert np.all(tab[:, 0] == 1.0)
    for n in range(7):
        assert np.allclose(tab[:, n], special.eval_jacobi(n, alpha, beta, z), rtol=1e-12, atol=1e-12)


def test_eval_shape():
    fam = JacobiFamily(1, 1, 3)
    assert jacobi_eval_all(fam, 0.3).shape == (4,)
    assert jacobi_eval_all(fam, np.zeros((2, 5))).shape == (2, 5, 4)


def test_legendre_norms():
    z = univariate_norms(JacobiFamily(0, 0, 6))
    assert z[0] == 1.0
    assert np.allclose(z, 1.0 / (2 * np.arange(7) + 1), rtol=1e-13)


def test_norms_agree_with_independent_quadrature():
    pr = ShiftedBeta(2.5, 0.7, 0, 1)
    fam = jacobi_from_beta(pr, 4)
    z = univariate_norms(fam)
    for j in range(5):
        ref = _beta_expectation(pr, lambda t: jacobi_eval_all(fam, t)[j] ** 2)
        assert z[j] == pytest.approx(ref, rel=1e-10)


def test_beta22_degree2_norm_monte_carlo():
    pr = ShiftedBeta(2, 2, 0, 1)
    fam = jacobi_from_beta(pr, 2)
    z = univariate_norms(fam)[2]
    x = rng_stream(20).beta(2, 2, size=10_000_000)
    v = jacobi_eval_all(fam, 2 * x - 1)[:, 2] ** 2
    assert abs(v.mean() - z) < 3 * v.std() / math.sqrt(v.size)


def test_norms_quadrature_guard():
    with pytest.raises(RuntimeError):
        univariate_norms(JacobiFamily(0, 0, 4), n_nodes=3)


def test_total_degree_small():
    assert total_degree_multiindices(2, 1).tolist() == [[0, 0], [1, 0], [0, 1]]
    assert len(total_degree_multiindices(1, 3)) == 4
    assert len(total_degree_multiindices(10, 2)) == 66


def test_total_degree_graded_lex_order():
    idx = total_degree_multiindices(3, 3)
    deg = idx.sum(axis=1)
    assert np.all(np.diff(deg) >= 0)
    for p in range(4):
        block = [tuple(r) for r in idx[deg == p]]
        assert block == sorted(block, reverse=True)
    assert not idx[0].any()


@pytest.mark.parametrize("d,p", [(d, p) for d in range(1, 13) for p in range(6) if math.comb(p + d, d) < 20000])
def test_cardinality_formula(d, p):
    idx = total_degree_multiindices(d, p)
    assert len(idx) == math.factorial(p + d) // (math.factorial(p) * math.factorial(d))
    assert len({tuple(r) for r in idx}) == len(idx)
    assert idx.min() >= 0 and idx.sum(axis=1).max() <= p


def test_total_degree_rejects():
    with pytest.raises(ValueError):
        total_degree_multiindices(0, 2)
    with pytest.raises(OverflowError):
        total_degree_multiindices(200, 200)


def _basis(d=3, p=2, seed=0):
    rng = rng_stream(seed)
    priors = [ShiftedBeta(float(rng.choice([1, 2, 5])), float(rng.choice([1, 2, 5])),
                          lo := float(rng.uniform(-5, 5)), lo + float(rng.uniform(0.5, 4))) for _ in range(d)]
    return build_basis(priors, p)


def test_basis_zero_index_and_norms():
    b = _basis()
    assert b.norms[0] == 1.0
    assert np.all(b.norms > 0)
    xi = canonical_to_affine(np.array([0.1, -0.4, 0.9]), b.lows, b.highs)
    assert b.evaluate(xi)[0] == 1.0


def test_basis_midpoint_odd_vanishes():
    b = build_basis([ShiftedBeta(1, 1, 0, 2), ShiftedBeta(1, 1, -1, 5)], 2)
    v = b.evaluate([1.0, 2.0])
    assert v[b.index_set.position([1, 1])] == 0.0


def test_basis_factorization():
    b = _basis(3, 3, seed=1)
    rng = rng_stream(2)
    for _ in range(10):
        z = rng.uniform(-1, 1, 3)
        xi = canonical_to_affine(z, b.lows, b.highs)
        v = b.evaluate(xi)
        zc = b.to_canonical(xi)
        tabs = [jacobi_eval_all(f, zc[j]) for j, f in enumerate(b.families)]
        a = b.index_set.position([1, 2, 0])
        assert v[a] == pytest.approx(tabs[0][1] * tabs[1][2] * tabs[2][0], rel=1e-14, abs=1e-14)


def test_strict_mode_names_dimension():
    b = build_basis([ShiftedBeta(1, 1, 0, 1), ShiftedBeta(1, 1, 0, 1)], 1)
    with pytest.raises(DomainError, match="dimension 1"):
        b.evaluate([0.5, 1.5])
    assert b.with_strict(False).evaluate([0.5, 1.5]).shape == (3,)


def test_design_matrix_rows():
    b = _basis()
    rng = rng_stream(3)
    pts = canonical_to_affine(rng.uniform(-1, 1, (5, 3)), b.lows, b.highs)
    X = b.design_matrix(pts)
    assert X.shape == (5, b.size)
    assert np.all(X[:, 0] == 1.0)
    assert np.array_equal(X[2], b.evaluate(pts[2]))
    assert np.array_equal(b.design_matrix(pts[:1])[0], b.evaluate(pts[0]))


def test_design_matrix_ten_input_shape():
    pr = [ShiftedBeta(1, 1, 0, 1)] * 10
    b = build_basis(pr, 2)
    assert b.design_matrix(qmc_design(pr, 256)).shape == (256, 66)


def test_design_matrix_empirical_orthogonality():
    pr = [ShiftedBeta(1, 1, 0, 1), ShiftedBeta(1, 1, -2, 3), ShiftedBeta(1, 1, 10, 11)]
    b = build_basis(pr, 2)
    X = b.design_matrix(qmc_design(pr, 100_000))
    gram = X.T @ X / X.shape[0]
    assert np.max(np.abs(gram - np.diag(b.norms))) < 0.01


def test_scale_equivariance():
    b = _basis(2, 3, seed=4)
    rng = rng_stream(5)
    z = rng.uniform(-1, 1, (20, 2))
    v = b.evaluate(canonical_to_affine(z, b.lows, b.highs))
    ref = np.ones_like(v)
    for j, f in enumerate(b.families):
        ref *= jacobi_eval_all(f, z[:, j])[:, b.index_set.indices[:, j]]
    assert np.allclose(v, ref, rtol=1e-13, atol=1e-13)


def test_serialization_roundtrip():
    b = _basis(4, 3, seed=6)
    b2 = TensorBasis.from_json(b.to_json())
    assert np.array_equal(b2.index_set.indices, b.index_set.indices)
    assert np.array_equal(b2.norms, b.norms)
    assert b2.fingerprint() == b.fingerprint()
    pts = canonical_to_affine(np.full(4, 0.3), b.lows, b.highs)
    assert np.array_equal(b2.evaluate(pts), b.evaluate(pts))


def test_serialization_rejects_tampered_norms():
    d = _basis().to_dict()
    d["norms"][3] *= 1.01
    with pytest.raises(ValueError):
        TensorBasis.from_dict(d)


def test_prior_count_mismatch():
    with pytest.raises(ValueError):
        TensorBasis((ShiftedBeta(1, 1, 0, 1),), MultiIndexSet.total_degree(2, 1))


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.3, 8), b=st.floats(0.3, 8), p=st.integers(1, 5))
def test_orthogonality_property(a, b, p):
    fam = jacobi_from_beta(ShiftedBeta(a, b, 0, 1), p)
    z, w = gauss_jacobi(fam, p + 2)
    v = jacobi_eval_all(fam, z)
    g = (v * w[:, None]).T @ v
    off = g - np.diag(np.diag(g))
    assert np.max(np.abs(off)) < 1e-10 * max(1.0, np.max(np.diag(g)))
