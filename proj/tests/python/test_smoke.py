"""Smoke tests for the python bindings: each main operation runs end to end
on a miniature problem and returns sane shapes/values."""

import math

import numpy as np
import pytest

import basmu


@pytest.fixture(scope="module")
def basis():
    grid = basmu.Grid2D(6, 6)
    return basmu.eigenbasis(grid, basmu.MaternParams(0.2, 2.0), 10)


@pytest.fixture(scope="module")
def sim(basis):
    cfg = basmu.CaseConfig.for_case(1, basmu.Scale.desk, seed=7)
    cfg.n1 = cfg.n2 = 6
    cfg.n = 40
    cfg.L = 10
    truth, data = basmu.simulate_case(cfg, basis)
    return cfg, truth, data


def test_matern_cov():
    assert basmu.matern_cov(0.0, basmu.MaternParams(0.2, 2.0)) == 1.0
    assert basmu.matern_cov(1.0, basmu.MaternParams(0.5, 1.0)) == pytest.approx(
        math.exp(-1.0), rel=1e-12
    )


def test_basis_orthonormality(basis):
    gram = basis.psi.T @ basis.psi / basis.p
    assert np.abs(gram - np.eye(basis.L)).max() < 1e-8
    theta = np.arange(basis.L, dtype=float)
    assert np.allclose(basis.to_coeffs(basis.from_coeffs(theta)), theta, atol=1e-10)


def test_simulation_shapes(sim):
    cfg, truth, data = sim
    assert data.M.shape == (cfg.n, cfg.num_voxels)
    assert data.Y.shape == (cfg.n,)
    assert truth.alpha.shape == (cfg.num_voxels,)
    assert truth.scalar_nie() == pytest.approx(
        float(truth.alpha @ truth.beta) / cfg.num_voxels
    )


def test_two_stage_pipeline(sim, basis):
    cfg, truth, data = sim

    mopts = basmu.MediatorOptions()
    mopts.total_iters = 200
    mopts.seed = 5
    med = basmu.fit_mediator(data, basis, mopts)
    assert med.num_draws == 20
    assert med.sigma2_M.min() > 0

    etahat = basmu.posterior_mean_eta(med, basis)
    assert etahat.shape == (cfg.n, cfg.num_voxels)

    oopts = basmu.OutcomeOptions()
    oopts.total_iters = 400
    oopts.seed = 6
    bima = basmu.fit_bima(data, basis, oopts)
    basmu_chains = basmu.fit_basmu(data, basis, etahat, oopts)
    assert bima.model == basmu.OutcomeModel.bima
    assert basmu_chains.nu.shape == (40, cfg.num_voxels)
    assert set(np.unique(basmu_chains.delta)) <= {0.0, 1.0}

    chain = basmu.nie_chain(med, bima, basis)
    summary = basmu.summarize_effects(chain, 0.95)
    assert summary.scalar_lo <= summary.scalar_mean <= summary.scalar_hi
    assert summary.voxels.mean.shape == (cfg.num_voxels,)


def test_bias_limits(sim, basis):
    cfg, truth, data = sim
    inputs = basmu.empirical_H_h(truth, data.X, data.C, basis)
    limit = basmu.bias_limit_bima(inputs)
    assert limit.shape == (basis.L,)
    assert np.all(np.isfinite(limit))

    # hhat = h0 zeroes the corrected limit
    inputs2 = basmu.empirical_H_h(
        truth, data.X, data.C, basis, etahat=truth.eta, nuhat=truth.nu
    )
    corrected = basmu.bias_limit_basmu(inputs2)
    assert np.abs(corrected).max() < np.abs(limit).max() + 1e-12

    theta = np.ones(3)
    val = basmu.freq_bias_limit(theta, theta, np.eye(3), 1.0)
    assert val == pytest.approx(1.5)  # shrinkage exactly 1/2 at sigma_eta = sigma_M


def test_identifiability(sim, basis):
    cfg, truth, data = sim
    theta_eta = basis.to_coeffs_rows(truth.eta)
    report = basmu.identifiability_check(data.X, data.C, theta_eta)
    assert report.full_rank
    assert report.rank == 1 + cfg.q + basis.L


def test_determinism(sim, basis):
    cfg, truth, data = sim
    opts = basmu.OutcomeOptions()
    opts.total_iters = 200
    opts.seed = 11
    a = basmu.fit_bima(data, basis, opts)
    b = basmu.fit_bima(data, basis, opts)
    assert np.array_equal(a.theta_beta, b.theta_beta)
