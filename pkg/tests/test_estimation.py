import numpy as np
import pytest

from conftest import make_scenario, manual_link, manual_scenario
from dmimo.channel import sample_channel_batch
from dmimo.config import SystemConfig
from dmimo.estimation import (
    estimate_batch,
    link_estimation_stats,
    mse,
    nmse,
    psi_matrix,
    scenario_estimation_stats,
)


def test_psi_scalar_single_user():
    psi = psi_matrix([np.eye(1)], 1, [1.0], 1.0)
    assert psi[0, 0] == pytest.approx(0.5)


def test_psi_scalar_two_cohort_users():
    psi = psi_matrix([np.eye(1), np.eye(1)], 1, [1.0, 1.0], 1.0)
    assert psi[0, 0] == pytest.approx(1.0 / 3.0)


def test_psi_noise_dominated_limit():
    sigma2 = 1e12
    psi = psi_matrix([np.eye(3)], 1, [1.0], sigma2)
    np.testing.assert_allclose(psi, np.eye(3) / sigma2, rtol=1e-9)


def test_psi_rejects_zero_noise():
    with pytest.raises(ValueError):
        psi_matrix([np.eye(1)], 1, [1.0], 0.0)


def test_nmse_scalar_hand_case(scalar_scenario):
    # R=1, tau=1, p^p=1, sigma^2=1 -> Psi=1/2, NMSE=(1-1/2)/1=0.5
    assert nmse(scalar_scenario, 0, 0, sigma2=1.0) == pytest.approx(0.5)
    assert mse(scalar_scenario, 0, 0, sigma2=1.0) == pytest.approx(0.5)


def test_estimation_stats_identities(default_scenario):
    stats = scenario_estimation_stats(default_scenario)
    for st in stats.values():
        np.testing.assert_allclose(st.est_cov + st.err_cov, st.R, atol=1e-24)
        np.testing.assert_allclose(st.psi, st.psi.conj().T, atol=1e-12)
        for mat in (st.est_cov, st.err_cov):
            vals = np.linalg.eigvalsh(mat)
            assert vals.min() > -1e-24
        assert np.trace(st.err_cov).real <= np.trace(st.R).real + 1e-24


def test_perfect_estimation_limit():
    # orthogonal pilots, vanishing noise -> hhat ~ h (Remark 1)
    sc = make_scenario(seed=11, num_users=3, pilot_length=3,
                       num_subbands=2, subband_capacity=3,
                       pilot_power=1.0, rician_override=1.0)
    # force orthogonal pilots
    from dmimo.scenario import PilotAssignment, Scenario
    sc = Scenario(config=sc.config, links=sc.links,
                  pilots=PilotAssignment((0, 1, 2)),
                  serving_sets=sc.serving_sets)
    sigma2 = sc.fullband_noise * 1e-8
    for m in range(sc.num_satellites):
        for k in range(sc.num_users):
            assert nmse(sc, m, k, sigma2=sigma2) < 1e-6
    h, _ = sample_channel_batch(sc, np.random.default_rng(0), 4)
    hhat, _ = estimate_batch(sc, h, np.random.default_rng(1), sigma2=sigma2)
    rel = np.linalg.norm(hhat - h) / np.linalg.norm(h)
    assert rel < 1e-3


def test_estimate_second_moment_matches_C():
    sc = make_scenario(seed=5)
    stats = scenario_estimation_stats(sc)
    h, _ = sample_channel_batch(sc, np.random.default_rng(2), 20000)
    hhat, _ = estimate_batch(sc, h, np.random.default_rng(3), stats=stats)
    m, k = 0, 1
    link = sc.link(m, k)
    mean = np.sqrt(link.rician * link.rician_scale) * link.los_vector
    centered = hhat[:, m, k, :] - mean
    emp = (np.abs(centered) ** 2).sum(axis=1)
    closed = np.trace(stats[(m, k)].est_cov).real
    se = emp.std(ddof=1) / np.sqrt(len(emp))
    assert abs(emp.mean() - closed) < 3 * se
    # estimator is unbiased: empirical mean matches the LoS mean
    emp_mean = hhat[:, m, k, :].mean(axis=0)
    tol = 4 * np.abs(centered).std() / np.sqrt(len(emp))
    assert np.abs(emp_mean - mean).max() < tol


def test_mmse_orthogonality():
    sc = make_scenario(seed=6)
    stats = scenario_estimation_stats(sc)
    h, _ = sample_channel_batch(sc, np.random.default_rng(4), 20000)
    hhat, _ = estimate_batch(sc, h, np.random.default_rng(5), stats=stats)
    m, k = 1, 2
    err = h[:, m, k, :] - hhat[:, m, k, :]
    link = sc.link(m, k)
    mean = np.sqrt(link.rician * link.rician_scale) * link.los_vector
    cross = ((hhat[:, m, k, :] - mean).conj() * err).sum(axis=1)
    se = np.abs(cross).std(ddof=1) / np.sqrt(len(cross))
    assert abs(cross.mean()) < 3 * se


def test_mse_mc_agreement():
    sc = make_scenario(seed=7)
    h, _ = sample_channel_batch(sc, np.random.default_rng(6), 10000)
    hhat, _ = estimate_batch(sc, h, np.random.default_rng(7))
    m, k = 0, 0
    emp = (np.abs(h[:, m, k, :] - hhat[:, m, k, :]) ** 2).sum(axis=1)
    closed = mse(sc, m, k)
    se = emp.std(ddof=1) / np.sqrt(len(emp))
    assert abs(emp.mean() - closed) < 3 * se


def test_nmse_monotone_in_rician(default_scenario):
    grid = [1.0, 5.0, 20.0, 100.0, 1e4]
    nm = [nmse(default_scenario.with_rician(kb), 0, 0) for kb in grid]
    ms = [mse(default_scenario.with_rician(kb), 0, 0) for kb in grid]
    assert all(b > a for a, b in zip(nm, nm[1:]))
    assert all(b < a for a, b in zip(ms, ms[1:]))
    assert nm[-1] > 0.99


def test_nmse_degenerate_zero_covariance():
    cfg = SystemConfig(
        num_satellites=1, num_users=2, antennas_x=1, antennas_y=1,
        num_subbands=1, pilot_length=1, pilot_power=1.0, cluster_size=1,
        subband_capacity=2,
    )
    links = [[manual_link(0.0, 1.0, [1.0]), manual_link(0.0, 1.0, [1.0])]]
    sc = manual_scenario(cfg, links, pilots=(0, 1), serving_sets=[{0}, {0}])
    assert nmse(sc, 0, 0, sigma2=1.0) == 1.0
