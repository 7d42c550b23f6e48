import math

import numpy as np
import pytest

from openchain.ensemble import (
    current_from_spdm,
    fit_inverse_length,
    run_ensemble,
    spdm_estimate,
    warm_covariance,
)
from openchain.errors import ConfigError, IntegrationDiverged
from openchain.langevin import IntegratorConfig, Trajectory
from openchain.linear_oracle import stationary_spdm
from openchain.model import ChainParams, SingleSiteParams, SpdmMatrix

SHORT = IntegratorConfig(dt=0.01, t_final=6.0, sample_stride=20, transient=2.0)
STATIONARY = IntegratorConfig(dt=0.01, t_final=60.0, sample_stride=20, transient=20.0)


@pytest.fixture(scope="module")
def linear_warm():
    return run_ensemble(ChainParams(L=4), STATIONARY, M=1000, master_seed=21, initial="warm")


class TestEstimators:
    def test_actions_are_spdm_diagonal(self):
        stats = run_ensemble(ChainParams(L=3, g=2.0), SHORT, M=20, master_seed=1, batch_size=7)
        diag = np.diagonal(stats.spdm, axis1=1, axis2=2)
        assert np.array_equal(stats.actions, diag.real)
        assert np.max(np.abs(diag.imag)) < 1e-12
        assert np.array_equal(stats.spdm, np.conj(np.swapaxes(stats.spdm, 1, 2)))

    def test_matches_trajectory_estimator(self):
        stats = run_ensemble(ChainParams(L=3), SHORT, M=9, master_seed=2, batch_size=4, keep_trajectories=True)
        for k in (3, len(stats.times) - 1):
            direct = spdm_estimate(stats.trajectories, k)
            assert np.allclose(direct.entries, stats.spdm[k])
            assert np.allclose(direct.standard_errors, stats.spdm_se[k])
        assert np.allclose(current_from_spdm(spdm_estimate(stats.trajectories, 5), 1.0), stats.current[5])

    def test_stationary_is_window_average(self):
        stats = run_ensemble(ChainParams(L=2), SHORT, M=5, master_seed=3, keep_trajectories=True)
        w0 = SHORT.first_window_sample
        per = np.array([np.mean(np.abs(t.states[w0:]) ** 2, axis=0) for t in stats.trajectories])
        assert np.allclose(stats.stationary_actions, per.mean(axis=0))
        assert np.allclose(stats.stationary_actions_se, per.std(axis=0, ddof=1) / math.sqrt(5))

    def test_se_scales_with_realizations(self):
        p = SingleSiteParams()
        small = run_ensemble(p, SHORT, M=1000, master_seed=4)
        large = run_ensemble(p, SHORT, M=4000, master_seed=4)
        ratio = large.actions_se[1:, 0] / small.actions_se[1:, 0]
        assert np.median(ratio) == pytest.approx(0.5, rel=0.1)

    def test_no_drive_no_motion(self):
        stats = run_ensemble(ChainParams(L=3, D1=0.0, DL=0.0, g=1.0), SHORT, M=4)
        assert np.all(stats.spdm == 0)
        assert np.all(stats.current == 0)
        assert stats.stationary_current == 0

    def test_single_site_has_no_current(self):
        stats = run_ensemble(SingleSiteParams(), SHORT, M=4)
        assert stats.current is None and stats.stationary_current is None


class TestReproducibility:
    def test_worker_count_does_not_matter(self):
        p = ChainParams(L=3, g=2.0)
        a = run_ensemble(p, SHORT, M=40, master_seed=9, batch_size=8, threads=1)
        b = run_ensemble(p, SHORT, M=40, master_seed=9, batch_size=8, threads=3)
        assert np.array_equal(a.spdm, b.spdm)
        assert np.array_equal(a.stationary_actions_se, b.stationary_actions_se)
        assert a.stationary_current == b.stationary_current

    def test_seed_changes_result(self):
        p = ChainParams(L=3)
        a = run_ensemble(p, SHORT, M=10, master_seed=1)
        b = run_ensemble(p, SHORT, M=10, master_seed=2)
        assert not np.array_equal(a.actions, b.actions)

    def test_warm_start_reproducible(self):
        p = ChainParams(L=3, g=2.0)
        a = run_ensemble(p, SHORT, M=10, master_seed=1, initial="warm")
        b = run_ensemble(p, SHORT, M=10, master_seed=1, initial="warm", batch_size=3)
        assert np.allclose(a.actions, b.actions, rtol=1e-12)


class TestStationaryPhysics:
    def test_matches_oracle(self, linear_warm):
        oracle = stationary_spdm(ChainParams(L=4)).entries
        est = linear_warm.stationary_spdm
        re_ok = np.abs(est.entries.real - oracle.real) <= 3 * linear_warm.stationary_spdm_se_real + 1e-12
        im_ok = np.abs(est.entries.imag - oracle.imag) <= 3 * linear_warm.stationary_spdm_se_imag + 1e-12
        # 32 comparisons at 3 sigma: allow one statistical outlier
        assert np.count_nonzero(~re_ok) + np.count_nonzero(~im_ok) <= 1

    def test_current(self, linear_warm):
        assert abs(linear_warm.stationary_current - 0.1) < 3 * linear_warm.stationary_current_se

    def test_bond_currents_equal(self, linear_warm):
        j = linear_warm.stationary_spdm.bond_currents(1.0)
        se = np.diagonal(linear_warm.stationary_spdm_se_imag, 1)
        assert np.all(np.abs(j - j.mean()) < 3 * se * math.sqrt(2))

    def test_flat_slopes(self, linear_warm):
        assert np.all(np.abs(linear_warm.stationary_slopes) < 3 * linear_warm.stationary_slopes_se)

    def test_equal_reservoirs(self):
        p = ChainParams(L=4, D1=0.5, DL=0.5)
        stats = run_ensemble(p, STATIONARY, M=600, master_seed=22, initial="warm")
        assert abs(stats.stationary_current) < 3 * stats.stationary_current_se
        bulk = stats.stationary_actions[1:-1]
        assert np.all(np.abs(bulk - 1.0) < 3 * stats.stationary_actions_se[1:-1])

    def test_omega_invariance(self):
        res = [run_ensemble(ChainParams(L=3, g=1.0, omega=w), STATIONARY, M=400, master_seed=23, initial="warm")
               for w in (1.0, 2.5)]
        diff = np.abs(res[0].stationary_actions - res[1].stationary_actions)
        se = np.hypot(res[0].stationary_actions_se, res[1].stationary_actions_se)
        assert np.all(diff < 3 * se)
        dj = abs(res[0].stationary_current - res[1].stationary_current)
        assert dj < 3 * math.hypot(res[0].stationary_current_se, res[1].stationary_current_se)


class TestHelpers:
    def test_spdm_single(self):
        t = Trajectory(np.array([0.0]), np.array([[1, 1j]]))
        rho = spdm_estimate([t], 0)
        assert np.allclose(rho.entries, [[1, 1j], [-1j, 1]])
        assert np.all(rho.standard_errors == 0)

    def test_spdm_grid_mismatch(self):
        a = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 2)))
        b = Trajectory(np.array([0.0, 2.0]), np.zeros((2, 2)))
        with pytest.raises(ConfigError):
            spdm_estimate([a, b], 0)

    def test_current(self):
        assert current_from_spdm(np.array([[0, 0.1j], [-0.1j, 0]]), 1.0) == pytest.approx(0.1)
        assert current_from_spdm(np.array([[1.0, 0.3], [0.3, 1.0]]), 1.0) == 0
        assert current_from_spdm(stationary_spdm(ChainParams()), 1.0) == pytest.approx(0.1)
        with pytest.raises(ConfigError):
            current_from_spdm(SpdmMatrix(np.ones((1, 1))), 1.0)

    def test_fit_exact(self):
        L = np.array([10, 20, 40])
        fit = fit_inverse_length(L, 0.06 / L + 0.001, np.full(3, 1e-4))
        assert fit["slope"] == pytest.approx(0.06)
        assert fit["intercept"] == pytest.approx(0.001)
        assert fit["r2"] == pytest.approx(1.0)
        prop = fit_inverse_length(L, 0.06 / L, np.full(3, 1e-4), intercept=False)
        assert prop["slope"] == pytest.approx(0.06) and prop["intercept"] == 0

    def test_fit_needs_points(self):
        with pytest.raises(ConfigError):
            fit_inverse_length([10, 20], [0.1, 0.05], [0.01, 0.01])

    def test_warm_covariance(self):
        assert np.allclose(warm_covariance(ChainParams(L=3)), stationary_spdm(ChainParams(L=3)).entries)
        assert np.allclose(np.diag(warm_covariance(ChainParams(L=3, g=2.0))).real, [1.0, 0.75, 0.5])
        assert warm_covariance(SingleSiteParams(D=0.3, gamma=0.6))[0, 0] == pytest.approx(0.5)

    def test_initial_covariance(self):
        p = SingleSiteParams(D=0.0, gamma=0.5)
        stats = run_ensemble(p, SHORT, M=2000, master_seed=8, initial_covariance=[[2.0]])
        expected = 2.0 * np.exp(-0.5 * stats.times)
        assert np.all(np.abs(stats.actions[:, 0] - expected) < 3 * stats.actions_se[:, 0])

    @pytest.mark.parametrize("kw", [dict(M=1), dict(M=2.5), dict(batch_size=0), dict(initial="hot"),
                                    dict(initial=[0, 0])])
    def test_invalid(self, kw):
        args = dict(M=4)
        args.update(kw)
        with pytest.raises(ConfigError):
            run_ensemble(ChainParams(L=3), SHORT, **args)

    def test_divergence_propagates(self):
        p = ChainParams(L=5, gamma1=0, gammaL=0, D1=0.1, DL=0)
        cfg = IntegratorConfig(dt=5.0, t_final=2000.0, sample_stride=1, transient=0.0)
        with pytest.raises(IntegrationDiverged) as info:
            run_ensemble(p, cfg, M=3, initial=[1, 0, 0, 0, 0])
        assert info.value.trajectory_index is not None
