import math

import numpy as np
import pytest

from gpcinv.basis import build_basis
from gpcinv.distributions import ShiftedBeta, rng_stream, sample_shifted_beta
from gpcinv.gibbs import GibbsChain, GibbsHyperparams, TrainingDataset, run_gibbs
from gpcinv.surrogate import (SurrogateModel, bma_estimate, coefficient_summary, evaluate, inclusion_probabilities,
                              integrated_autocorrelation_time, mpm_estimate, mpm_select, parameter_importance)
from gpcinv.testbed import qmc_design


def _chain(c, gamma=None, basis=None):
    c = np.asarray(c, dtype=float)
    T, m = c.shape
    gamma = (c != 0).astype(np.int8) if gamma is None else np.asarray(gamma, dtype=np.int8)
    return GibbsChain(c, gamma, np.ones(T), np.ones(T), np.full(T, 0.5), np.arange(1, T + 1), T, 0, basis=basis)


def _basis(d=2, p=2):
    return build_basis([ShiftedBeta(1, 1, 0, 1), ShiftedBeta(2, 2, -1, 3), ShiftedBeta(5, 1, 2, 4)][:d], p)


def _model(coef, basis, inclusion=None, mode="bma"):
    coef = np.asarray(coef, dtype=float)
    inc = (coef != 0).astype(float) if inclusion is None else inclusion
    return SurrogateModel(basis, coef, np.zeros_like(coef), inc, mode, 1.0, 1.0, 0.5, float(coef[0]), 0.0)


def test_iat_white_noise_and_ar1():
    x = rng_stream(0).standard_normal(100_000)
    assert integrated_autocorrelation_time(x) == pytest.approx(1.0, abs=0.05)
    rng = rng_stream(1)
    phi = 0.8
    e = rng.standard_normal(200_000)
    y = np.empty_like(e)
    y[0] = e[0]
    for t in range(1, y.size):
        y[t] = phi * y[t - 1] + e[t]
    assert integrated_autocorrelation_time(y) == pytest.approx((1 + phi) / (1 - phi), rel=0.1)


def test_iat_constant_is_one():
    assert integrated_autocorrelation_time(np.full(100, 3.0)) == 1.0


def test_bma_constant_chain():
    b = _basis()
    state = np.zeros(b.size)
    state[[0, 2]] = [1.5, -0.25]
    model = bma_estimate(_chain(np.tile(state, (50, 1)), basis=b))
    assert np.array_equal(model.coef, state)
    assert np.all(model.coef_se == 0.0)
    assert model.mean == 1.5
    assert model.variance == pytest.approx(0.0625 * b.norms[2], rel=1e-14)


def test_bma_alternating_chain():
    b = _basis()
    c = np.zeros((10, b.size))
    c[:, 0] = [1, 3] * 5
    assert bma_estimate(_chain(c, basis=b)).coef[0] == 2.0


def test_empty_chain_rejected():
    b = _basis()
    with pytest.raises(ValueError):
        bma_estimate(_chain(np.zeros((0, b.size)), basis=b))


def test_inclusion_probabilities_on_off():
    g = np.array([[1, 0, 1], [1, 0, 0], [1, 0, 1], [1, 0, 0]], dtype=np.int8)
    assert inclusion_probabilities(_chain(np.zeros((4, 3)), g)).tolist() == [1.0, 0.0, 0.5]


def test_mpm_select_strict():
    assert mpm_select([0.7, 0.5, 0.0, 0.5000001, 1.0]).tolist() == [1, 0, 0, 1, 1]


def test_mpm_model_invariant():
    b = _basis()
    coef = np.zeros(b.size)
    coef[1] = 0.2
    with pytest.raises(ValueError):
        _model(coef, b, inclusion=np.full(b.size, 0.3), mode="mpm")


def test_evaluate_constant_and_linearity():
    b = _basis(3, 2)
    coef = np.zeros(b.size)
    coef[0] = 5.0
    pts = qmc_design(b.priors, 17)
    assert np.allclose(evaluate(_model(coef, b), pts), 5.0)
    rng = rng_stream(2)
    c1, c2 = rng.normal(size=b.size), rng.normal(size=b.size)
    lhs = evaluate(_model(c1 + c2, b), pts)
    rhs = evaluate(_model(c1, b), pts) + evaluate(_model(c2, b), pts)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
    assert _model(c1, b)(pts[3]) == pytest.approx(evaluate(_model(c1, b), pts)[3], rel=1e-14)


def test_noiseless_interpolation():
    b = _basis(2, 2)
    x = qmc_design(b.priors, 64)
    truth = rng_stream(3).normal(size=b.size)
    u = b.design_matrix(x) @ truth
    # b_sigma sets a floor of roughly b_sigma / (n/2) under sigma2, so shrink it for exact data
    hyper = GibbsHyperparams(b_sigma=1e-20)
    chain = run_gibbs(TrainingDataset(x, u), b, hyper, 3000, 1000, rng=rng_stream(4),
                      fixed_gamma=np.ones(b.size))
    model = bma_estimate(chain)
    assert np.allclose(model(x[:5]), u[:5], atol=1e-6)


def test_parseval_moments_monte_carlo():
    b = _basis(3, 2)
    coef = rng_stream(5).normal(size=b.size)
    model = bma_estimate(_chain(np.tile(coef, (3, 1)), basis=b))
    rng = rng_stream(6)
    xs = np.column_stack([sample_shifted_beta(pr, rng, size=1_000_000) for pr in b.priors])
    y = model(xs)
    se_mean = y.std() / 1e3
    assert abs(y.mean() - model.mean) < 3 * se_mean
    dev = (y - y.mean()) ** 2
    assert abs(dev.mean() - model.variance) < 3 * dev.std() / 1e3


def test_known_truth_moments():
    pr = [ShiftedBeta(1, 1, 0, 1), ShiftedBeta(1, 1, 0, 1)]
    b = build_basis(pr, 2)
    x = qmc_design(pr, 256)
    truth = np.zeros(b.size)
    truth[0], truth[1] = 2.0, 0.5
    u = b.design_matrix(x) @ truth + 0.01 * rng_stream(7).normal(size=256)
    model = bma_estimate(run_gibbs(TrainingDataset(x, u), b, None, 6000, 2000, rng=rng_stream(8)))
    assert model.mean == pytest.approx(2.0, abs=0.02)
    assert model.variance == pytest.approx(0.25 * b.norms[1], rel=0.05)


def _sparse_problem(seed=9):
    pr = [ShiftedBeta(1, 1, 0, 1)] * 3
    b = build_basis(pr, 2)
    x = qmc_design(pr, 128)
    truth = np.zeros(b.size)
    truth[[0, 1, 5]] = [1.0, 2.0, -0.8]
    u = b.design_matrix(x) @ truth + 0.05 * rng_stream(seed).normal(size=128)
    return b, TrainingDataset(x, u), truth


def test_mpm_sparsity_and_bma_agreement():
    b, ds, truth = _sparse_problem()
    chain = run_gibbs(ds, b, None, 8000, 2000, rng=rng_stream(10))
    bma = bma_estimate(chain)
    sel = mpm_select(bma.inclusion)
    assert np.array_equal(sel, (truth != 0).astype(np.int8))
    mpm = mpm_estimate(ds, b, None, sel, 8000, 2000, rng_stream(11), inclusion=bma.inclusion)
    assert mpm.mode == "mpm"
    assert np.count_nonzero(mpm.coef) == sel.sum()
    assert np.all(mpm.coef[sel == 0] == 0.0)
    pts = qmc_design(b.priors, 100, scramble=True, seed=1)
    psi = b.design_matrix(pts)
    refit = run_gibbs(ds, b, None, 8000, 2000, rng=rng_stream(11), fixed_gamma=sel)
    # posterior standard deviation of each prediction under either fit
    sd = np.hypot((chain.c @ psi.T).std(axis=0), (refit.c @ psi.T).std(axis=0))
    assert np.all(np.abs(bma(pts) - mpm(pts)) < 2 * sd)


def test_mpm_empty_model():
    b, ds, _ = _sparse_problem()
    model = mpm_estimate(ds, b, None, np.zeros(b.size), 3000, 1000, rng_stream(12))
    assert np.all(model.coef == 0.0)
    assert model.sigma2 == pytest.approx(np.mean(ds.outputs**2), rel=0.2)


def test_mpm_all_ones_matches_ridge():
    b, ds, _ = _sparse_problem()
    X = b.design_matrix(ds.inputs)
    lam = 1.0
    chain = run_gibbs(ds, b, None, 20000, 2000, rng=rng_stream(13), fixed_gamma=np.ones(b.size),
                      fixed_lambda=lam)
    model = bma_estimate(chain)
    ridge = np.linalg.solve(X.T @ X + lam * np.eye(b.size), X.T @ ds.outputs)
    assert np.all(np.abs(model.coef - ridge) < 3 * model.coef_se + 1e-12)


def test_mpm_inclusion_consistency_check():
    b, ds, _ = _sparse_problem()
    with pytest.raises(ValueError):
        mpm_estimate(ds, b, None, np.ones(b.size), 10, 5, rng_stream(0), inclusion=np.zeros(b.size))


def test_parameter_importance():
    b = _basis(3, 2)
    inc = np.zeros(b.size)
    inc[0] = 1.0
    flags, scores = parameter_importance(_model(np.r_[1.0, np.zeros(b.size - 1)], b, inc))
    assert not flags.any()
    inc[b.index_set.position([1, 0, 1])] = 0.8
    inc[b.index_set.position([0, 1, 0])] = 0.4
    flags, scores = parameter_importance(_model(np.zeros(b.size), b, inc))
    assert flags.tolist() == [True, False, True]
    assert scores.tolist() == [0.8, 0.4, 0.8]


def test_coefficient_summary():
    c = np.arange(20, dtype=float).reshape(10, 2)
    s = coefficient_summary(_chain(c))
    assert s.shape == (2, 5)
    assert s[0].tolist() == [0.0, 4.5, 9.0, 13.5, 18.0]


def test_json_roundtrip_bit_exact(tmp_path):
    b, ds, _ = _sparse_problem()
    model = bma_estimate(run_gibbs(ds, b, None, 500, 200, rng=rng_stream(14)))
    path = tmp_path / "m.json"
    model.to_json(path)
    back = SurrogateModel.from_json(path)
    for f in ("coef", "coef_se", "inclusion"):
        assert np.array_equal(getattr(back, f), getattr(model, f))
    assert (back.sigma2, back.lam, back.rho, back.mean, back.variance) == \
        (model.sigma2, model.lam, model.rho, model.mean, model.variance)
    assert back.basis.fingerprint() == b.fingerprint()
    assert SurrogateModel.from_json(model.to_json()).coef.tolist() == model.coef.tolist()


def test_hyperparams_pass_through():
    b, ds, _ = _sparse_problem()
    chain = run_gibbs(ds, b, GibbsHyperparams(a_rho=1.0, b_rho=50.0), 2000, 500, rng=rng_stream(15))
    assert math.isfinite(bma_estimate(chain).rho)
