"""Complex envelopes on a :class:`~qndsoliton.units.Grid` and their spectral observables.

All array helpers accept either one envelope (1-D) or a batch of
envelopes stacked along the first axis (2-D); the transform always runs
over the last axis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, MeasurementError
from .units import Grid


@dataclass(frozen=True)
class Band:
    """Half-open frequency interval ``[omega_lo, omega_hi)``; endpoints may be infinite."""

    omega_lo: float
    omega_hi: float

    def __post_init__(self):
        if not self.omega_lo < self.omega_hi:
            raise ConfigError(f"band needs omega_lo < omega_hi, got [{self.omega_lo}, {self.omega_hi})")

    def check(self, grid: Grid) -> "Band":
        nyq = grid.nyquist
        for edge in (self.omega_lo, self.omega_hi):
            if math.isfinite(edge) and abs(edge) > nyq:
                raise ConfigError(f"band edge {edge} outside the grid Nyquist range +-{nyq:.4g}")
        return self

    def mask(self, grid: Grid) -> np.ndarray:
        self.check(grid)
        return (grid.omega >= self.omega_lo) & (grid.omega < self.omega_hi)


FULL_BAND = Band(-math.inf, math.inf)


@dataclass(frozen=True, eq=False)
class Envelope:
    grid: Grid
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.shape != (self.grid.n_points,):
            raise ConfigError(
                f"envelope needs {self.grid.n_points} samples, got shape {samples.shape}")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def zeros(cls, grid: Grid) -> "Envelope":
        return cls(grid, np.zeros(grid.n_points, dtype=np.complex128))

    def copy(self) -> "Envelope":
        return Envelope(self.grid, self.samples.copy())

    def __add__(self, other: "Envelope") -> "Envelope":
        if other.grid != self.grid:
            raise ConfigError("cannot add envelopes on different grids")
        return Envelope(self.grid, self.samples + other.samples)

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.samples) ** 2


def _phase_ramp(grid: Grid) -> np.ndarray:
    # exp(+i W_k tau_0) aligns the DFT with the continuous transform on [-T/2, T/2)
    return np.exp(1j * grid.omega * grid.tau[0])


def spectrum_array(samples: np.ndarray, grid: Grid) -> np.ndarray:
    """``u~_k = dt * sum_j u_j exp(+i W_k tau_j)`` in FFT bin order."""
    n = grid.n_points
    return sfft.ifft(samples, axis=-1) * (n * grid.dt) * _phase_ramp(grid)


def inverse_spectrum_array(spec: np.ndarray, grid: Grid) -> np.ndarray:
    return sfft.fft(spec * np.conj(_phase_ramp(grid)), axis=-1) / (grid.n_points * grid.dt)


def spectral_power(samples: np.ndarray, grid: Grid) -> np.ndarray:
    """``|u~_k|^2 dW / 2pi`` per bin; sums to the energy (Parseval)."""
    # |ifft * n * dt|^2 / T == n * dt * |ifft|^2; the phase ramp drops out
    f = sfft.ifft(samples, axis=-1)
    return (f.real ** 2 + f.imag ** 2) * (grid.n_points * grid.dt)


def energy(u: Envelope) -> float:
    return float(np.sum(u.samples.real ** 2 + u.samples.imag ** 2) * u.grid.dt)


def spectrum(u: Envelope) -> np.ndarray:
    return spectrum_array(u.samples, u.grid)


def band_energy_array(power: np.ndarray, grid: Grid, band: Band) -> np.ndarray:
    """Band energy from precomputed :func:`spectral_power`, summed in increasing-W order."""
    mask = band.mask(grid)[grid.sort_index]
    return np.sum(power[..., grid.sort_index][..., mask], axis=-1)


def band_energy(u: Envelope, band: Band) -> float:
    return float(band_energy_array(spectral_power(u.samples, u.grid), u.grid, band))


def band_bins(grid: Grid, band: Band) -> int:
    return int(np.count_nonzero(band.mask(grid)))


def center_frequency_array(power: np.ndarray, grid: Grid, band: Band = FULL_BAND) -> np.ndarray:
    mask = band.mask(grid)[grid.sort_index]
    p = power[..., grid.sort_index][..., mask]
    w = grid.omega_sorted[mask]
    total = np.sum(p, axis=-1)
    if np.any(total <= 0):
        raise MeasurementError(f"no spectral energy in band [{band.omega_lo}, {band.omega_hi})")
    return np.sum(p * w, axis=-1) / total


def center_frequency(u: Envelope, band: Band = FULL_BAND) -> float:
    return float(center_frequency_array(spectral_power(u.samples, u.grid), u.grid, band))


def temporal_centroid(samples: np.ndarray, grid: Grid) -> np.ndarray:
    p = samples.real ** 2 + samples.imag ** 2
    return np.sum(p * grid.tau, axis=-1) / np.sum(p, axis=-1)


def knife_edge(grid: Grid, omega_cut: float) -> np.ndarray:
    """Amplitude transmission passing bins with ``W_k < omega_cut``."""
    return (grid.omega < omega_cut).astype(np.float64)


def filter_array(samples: np.ndarray, grid: Grid, transmission: np.ndarray) -> np.ndarray:
    # ifft carries the +i W tau convention, so bin k of ifft(u) sits at grid.omega[k]
    return sfft.fft(sfft.ifft(samples, axis=-1) * transmission, axis=-1)


def apply_filter(u: Envelope, transmission) -> Envelope:
    """Multiply each spectral bin (FFT order, as ``grid.omega``) by an amplitude transmission."""
    t = np.asarray(transmission, dtype=np.float64)
    if t.shape != (u.grid.n_points,):
        raise ConfigError(f"transmission needs {u.grid.n_points} values, got shape {t.shape}")
    if np.any(~np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0:
        raise ConfigError("transmission values must lie in [0, 1]")
    return Envelope(u.grid, filter_array(u.samples, u.grid, t))


def write_envelope_csv(path, u: Envelope) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "re_u", "im_u"])
        for t, z in zip(u.grid.tau, u.samples):
            w.writerow([f"{t:.17g}", f"{z.real:.17g}", f"{z.imag:.17g}"])


def write_spectrum_csv(path, u: Envelope) -> None:
    grid = u.grid
    power = spectral_power(u.samples, grid) * grid.t_window  # |u~|^2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "power"])
        for k in grid.sort_index:
            w.writerow([f"{grid.omega[k]:.17g}", f"{power[k]:.17g}"])


def read_envelope_csv(path, grid: Grid) -> Envelope:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Envelope(grid, data[:, 1] + 1j * data[:, 2])
