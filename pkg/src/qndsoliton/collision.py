"""Two-soliton collisions ending at the collision centre, and the probe frequency shift.

Geometry: the signal (red, velocity ``-omega0``) and the probe (blue,
``+omega0``) are launched so that their free-flight trajectories
``tau_c(xi) = tau_c(0) - W xi`` cross at ``tau = 0`` exactly at the fiber end.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ConfigError, MeasurementError, TuningError
from .field import (Band, Envelope, center_frequency_array, energy, filter_array,
                    spectral_power, temporal_centroid)
from .nlse import PropagationConfig, propagate_array, propagate_snapshots
from .units import SECH_FWHM, Grid, PhysicalMap, make_grid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolitonParams:
    amplitude: float = 1.0
    velocity: float = 0.0
    center: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ConfigError(f"soliton amplitude must be positive, got {self.amplitude}")

    @property
    def fwhm(self) -> float:
        return SECH_FWHM / self.amplitude


def fundamental_soliton(grid: Grid, p: SolitonParams) -> Envelope:
    """``A sech(A (tau - tau_c)) exp(-i W tau + i phi)`` sampled on ``grid``."""
    if p.amplitude * grid.t_window <= 20:
        raise ConfigError(
            f"window {grid.t_window} too small for amplitude {p.amplitude} (need A*T > 20)")
    if p.amplitude * (0.5 * grid.t_window - abs(p.center)) < 10:
        raise ConfigError(f"soliton centred at {p.center} does not fit in the window")
    a = p.amplitude
    x = a * (grid.tau - p.center)
    samples = a / np.cosh(x) * np.exp(-1j * p.velocity * grid.tau + 1j * p.phase)
    return Envelope(grid, samples)


@dataclass(frozen=True)
class CollisionSpec:
    """Symmetric two-soliton collision, centred at the end of the fiber.

    ``launch_offset`` moves both launch centres towards each other
    (positive = launched closer than the free-flight geometry).
    """

    omega0: float = 1.2
    fiber_length: float = 4.8
    amp_signal: float = 1.0
    amp_probe: float = 1.0
    relative_phase: float = 0.0
    drift: float = 0.0
    launch_offset: float = 0.0
    probe_present: bool = True

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ConfigError(f"omega0 must be positive, got {self.omega0}")
        if not self.fiber_length > 0:
            raise ConfigError(f"fiber_length must be positive, got {self.fiber_length}")
        if not (self.amp_signal > 0 and self.amp_probe > 0):
            raise ConfigError("soliton amplitudes must be positive")

    @property
    def signal(self) -> SolitonParams:
        return SolitonParams(self.amp_signal, -self.omega0 + self.drift,
                             (-self.omega0 + self.drift) * self.fiber_length + self.launch_offset, 0.0)

    @property
    def probe(self) -> SolitonParams:
        return SolitonParams(self.amp_probe, self.omega0 + self.drift,
                             (self.omega0 + self.drift) * self.fiber_length - self.launch_offset,
                             self.relative_phase)

    @property
    def split(self) -> float:
        """Signal/probe band boundary: midpoint of the two carrier frequencies."""
        return self.drift

    @property
    def probe_band(self) -> Band:
        return Band(self.split, math.inf)

    @property
    def signal_band(self) -> Band:
        return Band(-math.inf, self.split)

    def with_signal_amplitude(self, amp: float) -> "CollisionSpec":
        return replace(self, amp_signal=amp)

    def reference_energy(self) -> float:
        """Energy ``2A`` of the unperturbed signal soliton."""
        return 2.0 * self.amp_signal


def collision_initial(grid: Grid, spec: CollisionSpec) -> Envelope:
    s, p = spec.signal, spec.probe
    u = fundamental_soliton(grid, s)
    if not spec.probe_present:
        return u
    gap = p.center - s.center
    if gap <= 2.0 * (0.5 * s.fwhm + 0.5 * p.fwhm):
        raise ConfigError(
            f"solitons overlap at launch: separation {gap:.4g} <= {s.fwhm + p.fwhm:.4g}")
    return u + fundamental_soliton(grid, p)


def predicted_probe_shift(amplitude: float, omega0: float, d_amp_signal: float = 0.0) -> float:
    """First-order probe frequency shift at the collision centre for well separated spectra."""
    if not omega0 > 0:
        raise ConfigError(f"omega0 must be positive, got {omega0}")
    return 2.0 * amplitude ** 2 / (3.0 * omega0) * (1.0 + d_amp_signal / (2.0 * amplitude))


def xpm_phase_estimate(spec: CollisionSpec, xi_end: Optional[float] = None) -> float:
    """Cross-phase imprinted on the signal by the unperturbed probe up to ``xi_end``."""
    s, p = spec.signal, spec.probe
    xi_end = spec.fiber_length if xi_end is None else xi_end

    def integrand(xi):
        sep = (s.center - s.velocity * xi) - (p.center - p.velocity * xi)
        return p.amplitude ** 2 / math.cosh(p.amplitude * sep) ** 2

    xi_c = (p.center - s.center) / (p.velocity - s.velocity)
    points = [xi_c] if 0 < xi_c < xi_end else None
    val, _ = integrate.quad(integrand, 0.0, xi_end, points=points, limit=200)
    return 2.0 * val


@dataclass
class CollisionResult:
    spec: CollisionSpec
    final_field: Envelope
    probe_shift: float
    signal_shift: float
    collision_length: float
    xpm_phase: float
    collision_length_m: Optional[float] = None
    energy_error: float = 0.0

    def to_record(self) -> dict:
        rec = {
            "omega0": self.spec.omega0,
            "fiber_length": self.spec.fiber_length,
            "amp_signal": self.spec.amp_signal,
            "amp_probe": self.spec.amp_probe,
            "relative_phase": self.spec.relative_phase,
            "launch_offset": self.spec.launch_offset,
            "probe_shift": self.probe_shift,
            "signal_shift": self.signal_shift,
            "predicted_probe_shift": predicted_probe_shift(self.spec.amp_signal, self.spec.omega0),
            "collision_length": self.collision_length,
            "collision_length_m": self.collision_length_m,
            "xpm_phase": self.xpm_phase,
            "energy_error": self.energy_error,
        }
        return rec


def _band_centroids(samples: np.ndarray, grid: Grid, spec: CollisionSpec) -> tuple:
    power = spectral_power(samples, grid)
    try:
        wp = center_frequency_array(power, grid, spec.probe_band)
    except MeasurementError as exc:
        raise MeasurementError(f"probe band empty: {exc}") from exc
    ws = center_frequency_array(power, grid, spec.signal_band)
    return wp, ws


def reference_centroids(grid: Grid, spec: CollisionSpec) -> tuple:
    """Band centroids of each soliton launched alone: the zero of the shift scale.

    They differ from the nominal velocities by the part of each spectrum cut
    off at the band split, and do not depend on pulse position or phase.
    """
    wp, _ = _band_centroids(fundamental_soliton(grid, spec.probe).samples, grid, spec)
    ws = center_frequency_array(spectral_power(fundamental_soliton(grid, spec.signal).samples, grid),
                                grid, spec.signal_band)
    return float(wp), float(ws)


def measure_shifts(samples: np.ndarray, grid: Grid, spec: CollisionSpec,
                   reference: Optional[tuple] = None) -> tuple:
    """(probe shift, signal shift) of one field or a batch of fields.

    Shifts are band centroids minus :func:`reference_centroids` unless an
    explicit ``(probe, signal)`` reference pair is given.
    """
    wp0, ws0 = reference_centroids(grid, spec) if reference is None else reference
    wp, ws = _band_centroids(samples, grid, spec)
    return wp - wp0, ws - ws0


def _separations(snaps, spec: CollisionSpec) -> np.ndarray:
    grid = snaps.grid
    lo = (grid.omega < spec.split).astype(float)
    sig = filter_array(snaps.fields, grid, lo)
    prb = filter_array(snaps.fields, grid, 1.0 - lo)
    return np.abs(temporal_centroid(prb, grid) - temporal_centroid(sig, grid))


def run_collision(spec: CollisionSpec, cfg: PropagationConfig, grid: Optional[Grid] = None,
                  pmap: Optional[PhysicalMap] = None, snapshot_rows: int = 201) -> CollisionResult:
    grid = grid or make_grid()
    cfg = cfg.with_length(spec.fiber_length)
    u0 = collision_initial(grid, spec)
    n_steps, _ = cfg.schedule()
    every = max(1, n_steps // max(1, snapshot_rows - 1))
    cfg = replace(cfg, snapshot_every=every)
    out, snaps = propagate_snapshots(u0, cfg)
    e0 = energy(u0)
    probe_shift, signal_shift = (float(x) for x in measure_shifts(out.samples, grid, spec))

    coll_len = 0.0
    if spec.probe_present:
        sep = _separations(snaps, spec)
        limit = 0.5 * (spec.signal.fwhm + spec.probe.fwhm)
        inside = sep <= limit
        # span of xi covered by the overlapping snapshots (trapezoid on the indicator)
        dxi = np.diff(snaps.xi)
        coll_len = float(np.sum(dxi * 0.5 * (inside[1:].astype(float) + inside[:-1])))
    xpm = xpm_phase_estimate(spec) if spec.probe_present else 0.0
    return CollisionResult(
        spec=spec,
        final_field=out,
        probe_shift=probe_shift,
        signal_shift=signal_shift,
        collision_length=coll_len,
        xpm_phase=xpm,
        collision_length_m=pmap.xi_to_meters(coll_len) if pmap else None,
        energy_error=abs(energy(out) - e0) / e0,
    )


def _shift_slope(spec: CollisionSpec, cfg: PropagationConfig, grid: Grid, n_probe: int = 16) -> tuple:
    """Probe shift at the fiber end and its xi-derivative there (centred difference)."""
    delta = n_probe * cfg.step
    u0 = collision_initial(grid, spec).samples
    u_before = propagate_array(u0, grid, cfg.with_length(spec.fiber_length - delta))
    mid_cfg = PropagationConfig(cfg.step, delta, cfg.dispersion_on, cfg.nonlinearity_on)
    u_end = propagate_array(u_before, grid, mid_cfg)
    u_after = propagate_array(u_end, grid, mid_cfg)
    ref = reference_centroids(grid, spec)
    s_before, _ = measure_shifts(u_before, grid, spec, ref)
    s_end, _ = measure_shifts(u_end, grid, spec, ref)
    s_after, _ = measure_shifts(u_after, grid, spec, ref)
    return float(s_end), float(s_after - s_before) / (2.0 * delta)


@dataclass
class TuneResult:
    spec: CollisionSpec
    offset: float
    probe_shift: float
    iterations: int
    history: list = field(default_factory=list)


def tune_collision_center(spec: CollisionSpec, cfg: PropagationConfig, grid: Optional[Grid] = None,
                          bracket: float = 1.0, tol: float = 1e-4, max_iter: int = 30) -> TuneResult:
    """Bisect the launch offset until the probe shift peaks exactly at the fiber end.

    The xi-derivative of the probe shift at the fiber end decreases
    monotonically with the offset; its zero is the maximum of ``|probe_shift|``.
    """
    grid = grid or make_grid()
    # keep both solitons separated at launch for every offset in the bracket
    max_offset = 0.5 * ((spec.probe.center - spec.signal.center) + 2 * spec.launch_offset
                        - (spec.signal.fwhm + spec.probe.fwhm)) - 1e-6
    lo, hi = -bracket, min(bracket, max_offset)
    history = []

    def slope_at(off):
        s, d = _shift_slope(replace(spec, launch_offset=off), cfg, grid)
        history.append((off, s, d))
        log.debug("tune offset=%.6g shift=%.6g slope=%.6g", off, s, d)
        return d

    d_lo, d_hi = slope_at(lo), slope_at(hi)
    if not (d_lo > 0 > d_hi):
        raise TuningError(
            f"no interior maximum of the probe shift for offsets in [{lo:.4g}, {hi:.4g}] "
            f"(slopes {d_lo:.3g}, {d_hi:.3g})")
    it = 2
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        if slope_at(mid) > 0:
            lo = mid
        else:
            hi = mid
        it += 1
    best = 0.5 * (lo + hi)
    tuned = replace(spec, launch_offset=best)
    shift, _ = _shift_slope(tuned, cfg, grid)
    return TuneResult(tuned, best, shift, it, history)


@dataclass
class EvolutionMap:
    xi: np.ndarray
    tau: np.ndarray
    omega: np.ndarray  # increasing order
    time_power: np.ndarray  # |u|^2, rows x n_points
    spectral_power: np.ndarray  # |u~|^2 / 2pi, rows x n_points, increasing omega
    split: float = 0.0

    def spectral_separation(self) -> np.ndarray:
        """Centroid distance between the spectral halves above and below ``split``, per row."""
        w = self.omega
        hi = w >= self.split
        p = self.spectral_power
        w_hi = (p[:, hi] * w[hi]).sum(axis=1) / p[:, hi].sum(axis=1)
        w_lo = (p[:, ~hi] * w[~hi]).sum(axis=1) / p[:, ~hi].sum(axis=1)
        return w_hi - w_lo


def evolution_map(spec: CollisionSpec, cfg: PropagationConfig, rows: int,
                  grid: Optional[Grid] = None, length: Optional[float] = None) -> EvolutionMap:
    """``rows`` equally spaced snapshots of temporal and spectral power from launch to ``length``."""
    if rows < 2:
        raise ConfigError(f"evolution map needs at least 2 rows, got {rows}")
    grid = grid or make_grid()
    length = spec.fiber_length if length is None else length
    u = collision_initial(grid, spec).samples
    xis = np.linspace(0.0, length, rows)
    fields = [u.copy()]
    for a, b in zip(xis[:-1], xis[1:]):
        u = propagate_array(u, grid, cfg.with_length(b - a))
        fields.append(u.copy())
    fields = np.array(fields)
    tp = fields.real ** 2 + fields.imag ** 2
    sp = spectral_power(fields, grid) * grid.t_window / (2.0 * np.pi)
    return EvolutionMap(xis, grid.tau.copy(), grid.omega_sorted.copy(), tp,
                        sp[:, grid.sort_index], spec.split)
