import math

import numpy as np
import pytest
import scipy.fft as sfft

from qndsoliton.collision import CollisionSpec, collision_initial
from qndsoliton.errors import ConfigError, PropagationError
from qndsoliton.field import Envelope, energy, spectrum
from qndsoliton.nlse import (PropagationConfig, aliasing_guard, propagate, propagate_array,
                             propagate_snapshots)
from qndsoliton.units import make_grid

from conftest import sech_field


def _momentum(u):
    s = spectrum(u)
    return math.fsum(u.grid.omega * np.abs(s) ** 2)


class TestConfig:
    def test_schedule_exact(self):
        assert PropagationConfig(step=0.25, length=1.0).schedule() == (4, 0.0)

    def test_schedule_partial(self):
        n, rest = PropagationConfig(step=0.3, length=1.0).schedule()
        assert n == 3 and rest == pytest.approx(0.1)

    def test_with_length_clamps_step(self):
        assert PropagationConfig(step=1e-3).with_length(1e-4).step == 1e-4

    @pytest.mark.parametrize("kw", [dict(step=0.0), dict(step=-1.0), dict(step=float("nan")),
                                    dict(step=1e-3, length=-1.0), dict(step=2.0, length=1.0),
                                    dict(snapshot_every=0)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            PropagationConfig(**kw)

    def test_field_width_checked(self, grid):
        with pytest.raises(ConfigError):
            propagate_array(np.zeros(100, complex), grid, PropagationConfig(length=0.01))


class TestExactSubflows:
    def test_kerr_only(self, small_grid):
        u = sech_field(small_grid, amp=1.5)
        cfg = PropagationConfig(step=0.01, length=0.73, dispersion_on=False)
        out = propagate(u, cfg)
        want = u.samples * np.exp(1j * np.abs(u.samples) ** 2 * 0.73)
        np.testing.assert_allclose(out.samples, want, atol=1e-12)

    def test_dispersion_only(self, small_grid):
        u = sech_field(small_grid, amp=2.0)
        cfg = PropagationConfig(step=0.013, length=0.5, nonlinearity_on=False)
        out = propagate(u, cfg)
        want = sfft.ifft(sfft.fft(u.samples) * np.exp(-0.5j * small_grid.omega ** 2 * 0.5))
        np.testing.assert_allclose(out.samples, want, atol=1e-12)

    def test_zero_length_is_identity(self, small_grid):
        u = sech_field(small_grid)
        out = propagate(u, PropagationConfig(step=1e-3, length=0.0))
        np.testing.assert_allclose(out.samples, u.samples, atol=1e-15)


class TestSoliton:
    def test_invariance_two_pi(self, grid):
        u = sech_field(grid)
        out = propagate(u, PropagationConfig(step=1e-3, length=2 * math.pi))
        assert np.max(np.abs(np.abs(out.samples) ** 2 - np.abs(u.samples) ** 2)) < 1e-6
        k = grid.n_points // 2
        phase = np.angle(out.samples[k] / u.samples[k])
        assert abs(np.angle(np.exp(1j * (phase - math.pi)))) < 1e-6  # e^{i 2pi / 2}

    def test_energy_conserved(self, grid):
        u = collision_initial(grid, CollisionSpec(omega0=1.2, fiber_length=3.0))
        out = propagate(u, PropagationConfig(step=1e-3, length=3.0))
        assert abs(energy(out) - energy(u)) / energy(u) < 1e-12

    def test_momentum_conserved(self, grid):
        spec = CollisionSpec(omega0=1.2, fiber_length=3.0, amp_signal=1.3)
        u = collision_initial(grid, spec)
        out = propagate(u, PropagationConfig(step=1e-3, length=3.0))
        p0 = _momentum(u)
        assert abs(_momentum(out) - p0) < 1e-9 * math.fsum(np.abs(spectrum(u)) ** 2)

    def test_partial_step_consistent(self, small_grid):
        u = sech_field(small_grid, amp=1.2, omega=0.5)
        a = propagate(u, PropagationConfig(step=0.01, length=0.555))
        b = propagate(u, PropagationConfig(step=0.005, length=0.555))
        assert np.max(np.abs(a.samples - b.samples)) < 1e-4


def test_second_order_convergence():
    grid = make_grid(1024, 60.0)
    spec = CollisionSpec(omega0=1.2, fiber_length=1.5)
    u0 = collision_initial(grid, spec).samples
    ref = propagate_array(u0, grid, PropagationConfig(step=1e-3 / 8, length=1.5))
    errs = []
    for h in (0.02, 0.01, 0.005):
        out = propagate_array(u0, grid, PropagationConfig(step=h, length=1.5))
        errs.append(np.max(np.abs(out - ref)))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.9 < p < 2.1 for p in orders), orders
    # Richardson extrapolation removes the leading term
    fine = propagate_array(u0, grid, PropagationConfig(step=0.005, length=1.5))
    coarse = propagate_array(u0, grid, PropagationConfig(step=0.01, length=1.5))
    rich = (4 * fine - coarse) / 3
    assert np.max(np.abs(rich - ref)) < 0.05 * errs[2]


def test_galilean_covariance():
    grid = make_grid(1024, 60.0)
    u0 = sech_field(grid, amp=1.4, center=-2.0)
    m = 7
    w = m * grid.d_omega  # grid-commensurate boost
    boosted = Envelope(grid, u0.samples * np.exp(-1j * w * grid.tau))
    L = 1.2
    cfg = PropagationConfig(step=1e-3, length=L)
    a = propagate(u0, cfg).samples
    b = propagate(boosted, cfg).samples
    # v(tau, xi) = u(tau + w xi, xi) exp(-i w tau - i w^2 xi / 2)
    shifted = sfft.ifft(sfft.fft(a) * np.exp(1j * grid.omega * w * L))
    want = shifted * np.exp(-1j * w * grid.tau - 0.5j * w * w * L)
    np.testing.assert_allclose(b, want, atol=1e-9)


def test_batch_equals_rows(small_grid):
    rng = np.random.default_rng(1)
    base = sech_field(small_grid).samples
    batch = np.array([base * (1 + 0.1 * rng.standard_normal()) for _ in range(3)])
    cfg = PropagationConfig(step=0.01, length=0.5)
    out = propagate_array(batch, small_grid, cfg)
    for r in range(3):
        np.testing.assert_allclose(out[r], propagate_array(batch[r], small_grid, cfg), atol=1e-14)
    assert out is not batch


def test_input_not_modified(small_grid):
    u = sech_field(small_grid).samples.copy()
    keep = u.copy()
    propagate_array(u, small_grid, PropagationConfig(step=0.01, length=0.2))
    np.testing.assert_array_equal(u, keep)


class TestGuard:
    def test_clean_soliton_small(self, grid):
        assert aliasing_guard(sech_field(grid)) < 1e-20

    def test_violation_raises(self):
        grid = make_grid(256, 10.0)
        u = sech_field(grid, amp=40.0)  # too narrow for the grid
        with pytest.raises(PropagationError) as info:
            propagate(u, PropagationConfig(step=1e-3, length=0.1))
        assert info.value.xi == 0.0

    def test_nan_raises_with_row(self, small_grid):
        batch = np.tile(sech_field(small_grid).samples, (3, 1))
        batch[2, 5] = np.nan
        with pytest.raises(PropagationError) as info:
            propagate_array(batch, small_grid, PropagationConfig(step=0.01, length=0.1))
        assert info.value.row == 2

    def test_growth_during_run_detected(self):
        grid = make_grid(512, 30.0)
        # a higher-order soliton compresses and pushes its spectrum toward the edge
        u = Envelope(grid, 4.0 * sech_field(grid, amp=3.0).samples)
        assert aliasing_guard(u) < 1e-6
        with pytest.raises(PropagationError) as info:
            propagate(u, PropagationConfig(step=1e-3, length=1.0), guard_limit=1e-6)
        assert 0 < info.value.xi <= 1.0


def test_snapshots(small_grid):
    u = sech_field(small_grid, omega=0.3)
    cfg = PropagationConfig(step=0.01, length=1.0, snapshot_every=25)
    out, snaps = propagate_snapshots(u, cfg)
    np.testing.assert_allclose(snaps.xi, [0.0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(snaps.fields[-1], out.samples, atol=0)
    np.testing.assert_allclose(snaps.fields[0], u.samples, atol=0)
    mid = propagate(u, PropagationConfig(step=0.01, length=0.5))
    np.testing.assert_allclose(snaps.fields[2], mid.samples, atol=1e-12)
