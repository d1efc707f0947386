import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from qndsoliton import bench
from qndsoliton.bench import (DetectionSetup, EnsembleStats, NoiseConfig, apply_efficiency,
                              conditional_variance, correlation_coefficient, detect_photon_number,
                              filtered_fraction, modulated_runs, noise_parabola, noise_sigma,
                              place_cut, qnd_report, realization_rng, run_ensemble_powers,
                              sample_vacuum_noise, transfer_coefficients)
from qndsoliton.collision import CollisionSpec, collision_initial
from qndsoliton.errors import ConfigError, EnsembleError, NumericError
from qndsoliton.field import FULL_BAND, Band, energy, spectral_power
from qndsoliton.nlse import PropagationConfig
from qndsoliton.units import make_grid


def correlated(r, rho, seed, mean=(1e4, 2e4), sd=(100.0, 150.0)):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, r))
    ns = mean[0] + sd[0] * z[0]
    np_ = mean[1] + sd[1] * (rho * z[0] + math.sqrt(1 - rho * rho) * z[1])
    return EnsembleStats(ns, np_)


def brute_force_noise(stats, a):
    """Variance of the combined readout n_S + a n_P, straight from the samples."""
    x = stats.n_signal + a * stats.n_probe
    return np.var(x, ddof=1) / np.mean(stats.n_signal)


class TestEstimators:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(-0.95, 0.95), st.integers(0, 2 ** 31))
    def test_identities(self, rho, seed):
        stats = correlated(500, rho, seed)
        v, a = conditional_variance(stats)
        c = correlation_coefficient(stats)
        m = stats.moments()
        assert v == pytest.approx(m["var_signal"] / m["mean_signal"] * (1 - c * c), rel=1e-6)
        assert a == pytest.approx(-m["cov"] / m["var_probe"], rel=1e-12)
        res = optimize.minimize_scalar(lambda x: brute_force_noise(stats, x),
                                       bracket=(-3, 0, 3), tol=1e-12)
        # the sample variance is flat at its minimum; judge a on its natural scale
        scale = math.sqrt(m["var_signal"] / m["var_probe"])
        assert res.x == pytest.approx(a, rel=1e-6, abs=1e-6 * scale)
        assert res.fun == pytest.approx(v, rel=1e-6)

    def test_parabola_matches_samples(self):
        stats = correlated(300, -0.6, 1)
        a = np.linspace(-2, 2, 81)
        got = noise_parabola(stats, a)
        want = [brute_force_noise(stats, x) for x in a]
        np.testing.assert_allclose(got, want, rtol=1e-10)
        v, a_opt, par = conditional_variance(stats, return_parabola=True)
        c2, c1, c0 = par.coefficients
        assert -c1 / (2 * c2) == pytest.approx(a_opt, rel=1e-12)
        assert par(a_opt) == pytest.approx(v, rel=1e-12)

    def test_independent_gives_unit_floor(self):
        # Poissonian, uncorrelated readings: the parabola bottoms out at ~1 near a = 0
        rng = np.random.default_rng(3)
        stats = EnsembleStats(rng.poisson(1e4, 20000).astype(float), rng.poisson(1e4, 20000).astype(float))
        v, a = conditional_variance(stats)
        assert v == pytest.approx(1.0, abs=0.03)
        assert abs(a) < 0.03

    def test_needs_realizations(self):
        with pytest.raises(ConfigError):
            conditional_variance(correlated(5, 0.1, 0))

    def test_zero_variance(self):
        with pytest.raises(NumericError):
            correlation_coefficient(EnsembleStats(np.ones(20), np.arange(20.0)))
        with pytest.raises(NumericError):
            conditional_variance(EnsembleStats(np.arange(20.0), np.ones(20)))

    def test_mismatched_lengths(self):
        with pytest.raises(ConfigError):
            EnsembleStats(np.ones(3), np.ones(4))

    def test_moments_compensated(self):
        # large offset, tiny spread: naive sums would lose the variance
        base = 1e12 + np.array([0.0, 1.0, 2.0, 3.0] * 5)
        stats = EnsembleStats(base, base[::-1].copy())
        assert stats.moments()["var_signal"] == pytest.approx(np.var(base - 1e12, ddof=1), rel=1e-12)

    def test_report_fields_and_errors(self):
        stats = correlated(1000, -0.5, 4)
        rep = qnd_report(stats)
        assert rep.correlation == pytest.approx(np.corrcoef(stats.n_signal, stats.n_probe)[0, 1], rel=1e-10)
        assert rep.correlation_se > 0 and rep.v_conditional_se > 0
        d = rep.to_dict()
        for key in ("v_conditional", "a_opt", "correlation", "t_signal", "t_probe", "t_sum", "t_sum_se"):
            assert key in d


class TestEfficiency:
    @given(st.floats(1.0, 1e9), st.floats(0.0, 1.0))
    def test_preserves_shot_noise(self, n, eta):
        m, v = apply_efficiency(n, n, eta)
        assert v == pytest.approx(m, rel=1e-12, abs=1e-300)

    def test_formula(self):
        assert apply_efficiency(10.0, 4.0, 0.5) == (5.0, 0.5 * 0.5 * 4.0 + 0.25 * 10.0)

    @pytest.mark.parametrize("eta", [-0.1, 1.1])
    def test_rejects(self, eta):
        with pytest.raises(ConfigError):
            apply_efficiency(1.0, 1.0, eta)

    def test_binomial_thinning_oracle(self):
        # photon-by-photon loss on Poissonian and sub-Poissonian sources
        rng = np.random.default_rng(5)
        for n in (rng.poisson(400, 200000), np.full(200000, 400)):
            kept = rng.binomial(n, 0.7)
            m, v = apply_efficiency(n.mean(), n.var(), 0.7)
            assert kept.mean() == pytest.approx(m, rel=2e-3)
            assert kept.var() == pytest.approx(v, rel=0.02)

    def test_stats_folds_efficiency(self):
        stats = correlated(400, -0.4, 6)
        lossy = stats.with_efficiency(0.745, 0.698)
        m0, m1 = stats.moments(), lossy.moments()
        assert m1["cov"] == pytest.approx(0.745 * 0.698 * m0["cov"], rel=1e-14)
        assert m1["mean_signal"] == pytest.approx(0.745 * m0["mean_signal"], rel=1e-14)


class TestNoise:
    def test_sigma(self, grid):
        assert noise_sigma(grid, 1e8, 2.0) == pytest.approx(math.sqrt(2.0 / (4 * 1e8 * grid.dt)))

    def test_rng_streams(self):
        a = realization_rng(1, 0).standard_normal(5)
        np.testing.assert_array_equal(a, realization_rng(1, 0).standard_normal(5))
        assert not np.allclose(a, realization_rng(1, 1).standard_normal(5))
        assert not np.allclose(a, realization_rng(2, 0).standard_normal(5))

    def test_vacuum_estimator_unbiased(self, small_grid):
        # symmetric ordering: subtracting half a photon per bin gives zero mean for vacuum
        vals = [detect_photon_number(sample_vacuum_noise(small_grid, 1e8, 2.0, realization_rng(0, i)),
                                     FULL_BAND, 1e8, 2.0) for i in range(2000)]
        assert abs(np.mean(vals)) < 4 * np.std(vals) / math.sqrt(len(vals))
        # vacuum photon-number variance: n_bins / 4 with this estimator
        assert np.var(vals) == pytest.approx(small_grid.n_points / 4, rel=0.1)

    def test_minimum_photon_number(self, small_grid):
        with pytest.raises(ConfigError):
            sample_vacuum_noise(small_grid, 10.0, 2.0, realization_rng(0, 0))
        with pytest.raises(ConfigError):
            NoiseConfig(photons_per_soliton=100.0)

    @pytest.mark.parametrize("kw", [dict(realizations=1), dict(modulation_depth=0.5), dict(seed=-1)])
    def test_noise_config_rejects(self, kw):
        with pytest.raises(ConfigError):
            NoiseConfig(**kw)

    def test_shot_noise_unpropagated(self, grid):
        spec = CollisionSpec(omega0=5.0, fiber_length=1.0, probe_present=False)
        ens = run_ensemble_powers(spec, NoiseConfig(realizations=2000, seed=11),
                                  PropagationConfig(), grid, propagate=False)
        stats = ens.detect(DetectionSetup(omega_sep=0.0))
        m = stats.moments()
        assert m["mean_signal"] == pytest.approx(1e8, rel=1e-4)
        assert m["var_signal"] / m["mean_signal"] == pytest.approx(1.0, abs=0.1)


class TestDetection:
    def test_masks_partition(self, grid):
        sig, prb, absb = DetectionSetup(0.0, 2.0).masks(grid)
        assert np.all(sig.astype(int) + prb + absb == 1)
        assert np.all(grid.omega[absb] >= 2.0) and np.all(grid.omega[sig] <= 0.0)

    @pytest.mark.parametrize("kw", [dict(omega_sep=1.0, omega_cut=0.5), dict(eta_signal=1.2),
                                    dict(eta_probe=-0.1)])
    def test_setup_rejects(self, kw):
        with pytest.raises(ConfigError):
            DetectionSetup(**kw)

    def test_sep_outside_grid(self, small_grid):
        with pytest.raises(ConfigError):
            DetectionSetup(omega_sep=1e3).masks(small_grid)

    def test_filtered_fraction_monotone(self, grid):
        u = collision_initial(grid, CollisionSpec(omega0=1.2, fiber_length=5.0)).samples
        p = spectral_power(u, grid)
        fr = [filtered_fraction(p, grid, DetectionSetup(0.0, c)) for c in (1.0, 1.5, 2.0, 2.5, 3.0)]
        assert all(a > b for a, b in zip(fr, fr[1:]))
        assert filtered_fraction(p, grid, DetectionSetup(0.0)) == 0.0

    @pytest.mark.parametrize("target", [0.05, 0.18, 0.5])
    def test_place_cut_hits_target(self, grid, target):
        u = collision_initial(grid, CollisionSpec(omega0=1.2, fiber_length=5.0)).samples
        p = spectral_power(u, grid)
        cut = place_cut(p, grid, 0.0, target)
        got = filtered_fraction(p, grid, DetectionSetup(0.0, cut))
        # brute force over every bin boundary above the split
        edges = grid.omega_sorted[grid.omega_sorted > 0.0] - 0.5 * grid.d_omega
        best = min(abs(filtered_fraction(p, grid, DetectionSetup(0.0, c)) - target) for c in edges)
        assert abs(got - target) == pytest.approx(best, abs=1e-12)
        k = np.argmin(np.abs(grid.omega - cut))
        assert abs(abs(grid.omega[k] - cut) - 0.5 * grid.d_omega) < 1e-12

    def test_place_cut_rejects(self, grid):
        with pytest.raises(ConfigError):
            place_cut(np.ones(grid.n_points), grid, 0.0, 1.5)
        with pytest.raises(NumericError):
            place_cut(np.zeros(grid.n_points), grid, 0.0, 0.2)


SMALL = make_grid(1024, 60.0)
QUICK = PropagationConfig(step=5e-3)


class TestEnsemble:
    def test_chunking_invariant(self):
        spec = CollisionSpec(omega0=1.2, fiber_length=2.0)
        noise = NoiseConfig(realizations=24, seed=3)
        a = run_ensemble_powers(spec, noise, QUICK, SMALL, chunk_rows=5)
        b = run_ensemble_powers(spec, noise, QUICK, SMALL, chunk_rows=24)
        np.testing.assert_array_equal(a.powers, b.powers)

    def test_realization_prefix_stable(self):
        # realization i does not depend on how many others are drawn
        spec = CollisionSpec(omega0=1.2, fiber_length=2.0)
        a = run_ensemble_powers(spec, NoiseConfig(realizations=10, seed=3), QUICK, SMALL)
        b = run_ensemble_powers(spec, NoiseConfig(realizations=20, seed=3), QUICK, SMALL)
        np.testing.assert_array_equal(a.powers, b.powers[:10])

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("QNDSOLITON_THREADS", "2")
        assert bench._thread_count() == 2
        monkeypatch.setenv("QNDSOLITON_THREADS", "x")
        with pytest.raises(ConfigError):
            bench._thread_count()

    def test_failure_reports_index(self, monkeypatch):
        monkeypatch.setattr(bench, "_guard_limit", lambda *a: 1e-30)
        spec = CollisionSpec(omega0=1.2, fiber_length=2.0)
        with pytest.raises(EnsembleError) as info:
            run_ensemble_powers(spec, NoiseConfig(realizations=8, seed=1), QUICK, SMALL, chunk_rows=4)
        assert info.value.index in range(4)
        assert str(info.value).startswith(f"realization {info.value.index}")

    def test_energy_mean(self):
        spec = CollisionSpec(omega0=1.2, fiber_length=2.0)
        ens = run_ensemble_powers(spec, NoiseConfig(realizations=50, seed=2), QUICK, SMALL)
        stats = ens.detect(DetectionSetup(0.0))
        total = stats.n_signal + stats.n_probe
        want = 1e8 * energy(collision_initial(SMALL, spec)) / 2.0
        assert np.mean(total) == pytest.approx(want, abs=4 * math.sqrt(want / 50))


class TestTransfer:
    def test_probe_absent_unit_transfer(self):
        spec = CollisionSpec(omega0=5.0, fiber_length=1.0, probe_present=False)
        noise = NoiseConfig(realizations=400, seed=9)
        cfg = PropagationConfig(step=1e-2)
        ens = run_ensemble_powers(spec, noise, cfg, SMALL)
        setup = DetectionSetup(0.0)
        stats = ens.detect(setup)
        runs = modulated_runs(spec, noise, cfg, SMALL)
        g = runs.gains(setup)
        # the red tail across the split scales like exp(-pi W0 / A): a few 1e-6 here
        assert g.g_signal == pytest.approx(1.0, abs=1e-5)
        assert abs(g.g_probe) < 1e-5
        rep = qnd_report(stats, g)
        assert rep.t_signal == pytest.approx(1.0, abs=4 * math.sqrt(2 / 400))
        # the probe band holds only vacuum plus a ~1e-6 tail: T_P is zero to ~1e-5
        assert abs(rep.t_probe) < 1e-4
        # only the sampling error of the mean photon number (~5e-6) remains
        assert rep.extra["t_signal_shot"] == pytest.approx(1.0, rel=1e-4)

    def test_efficiency_scaling(self):
        # shot-normalized: T_S = eta_S * g_S^2 * n_in / <n_S>; with g = 1, loss cancels
        stats = EnsembleStats(np.full(20, 1e8) + np.arange(20.0), np.full(20, 1.0) + np.arange(20.0))
        gains = bench.Gains(1.0, 0.0, 2e5, 1e8)
        t = bench._transfer_from(stats.with_efficiency(0.7, 0.6).moments(), gains, 0.7, 0.6)
        assert t["t_signal_shot"] == pytest.approx(1.0, rel=1e-6)
        assert t["t_probe"] == 0.0

    def test_linearity_in_modulation(self):
        spec = CollisionSpec(omega0=1.2, fiber_length=2.5)
        noise = NoiseConfig(realizations=12, seed=1, modulation_depth=1e-3)
        setup = DetectionSetup(0.0, 1.8)
        g1 = modulated_runs(spec, noise, QUICK, SMALL).gains(setup)
        g2 = modulated_runs(spec, noise, QUICK, SMALL, mu=5e-4).gains(setup)
        # T scales with g^2: a < 0.5% gain change keeps T within 1%
        assert g2.g_signal == pytest.approx(g1.g_signal, rel=5e-3)
        assert g2.g_probe == pytest.approx(g1.g_probe, rel=5e-3)
        stats = run_ensemble_powers(spec, noise, QUICK, SMALL).detect(setup)
        t1 = transfer_coefficients(spec, setup, noise, QUICK, stats, SMALL, gains=g1)
        t2 = transfer_coefficients(spec, setup, noise, QUICK, stats, SMALL, gains=g2)
        assert t2 == pytest.approx(t1, rel=1e-2)

    def test_modulation_required(self):
        spec = CollisionSpec(omega0=1.2, fiber_length=2.5)
        with pytest.raises(NumericError):
            modulated_runs(spec, NoiseConfig(modulation_depth=0.0), QUICK, SMALL)

    def test_zero_signal_variance(self):
        stats = EnsembleStats(np.ones(20), np.arange(20.0))
        with pytest.raises(NumericError):
            bench._transfer_from(stats.moments(), bench.Gains(1.0, 0.0, 1.0, 1.0), 1.0, 1.0)
