"""Simulation grid and soliton-unit <-> physical-unit conversions.

Frequencies follow the convention ``u~(W) = int u(t) exp(+i W t) dt`` so a
soliton carrying ``exp(-i W t)`` peaks at ``+W``.  Positive ``W`` is blue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

C_LIGHT = 299_792_458.0  # m/s

#: FWHM of a sech^2 intensity profile in units of the sech width t0.
SECH_FWHM = 2.0 * math.acosh(math.sqrt(2.0))


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic time window ``[-T/2, T/2)`` and its frequency axis.

    ``omega`` is in FFT order (index k pairs with ``numpy.fft`` bin k);
    ``omega_sorted`` / ``sort_index`` give the monotonically increasing view.
    """

    n_points: int
    t_window: float
    dt: float = field(init=False)
    tau: np.ndarray = field(init=False, repr=False, compare=False)
    omega: np.ndarray = field(init=False, repr=False, compare=False)
    sort_index: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.n_points, (int, np.integer)) or not _is_pow2(int(self.n_points)):
            raise ConfigError(f"n_points must be a power of two, got {self.n_points!r}")
        if self.n_points < 64:
            raise ConfigError(f"n_points must be >= 64, got {self.n_points}")
        if not (self.t_window > 0 and math.isfinite(self.t_window)):
            raise ConfigError(f"t_window must be positive, got {self.t_window!r}")
        n = int(self.n_points)
        dt = self.t_window / n
        tau = (np.arange(n) - n // 2) * dt
        omega = 2.0 * np.pi * np.fft.fftfreq(n, d=dt)
        sort_index = np.fft.fftshift(np.arange(n))
        for arr in (tau, omega, sort_index):
            arr.setflags(write=False)
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "t_window", float(self.t_window))
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "sort_index", sort_index)

    @property
    def d_omega(self) -> float:
        return 2.0 * np.pi / self.t_window

    @property
    def nyquist(self) -> float:
        """Magnitude of the unpaired Nyquist bin, ``pi / dt``."""
        return np.pi / self.dt

    @property
    def omega_sorted(self) -> np.ndarray:
        return self.omega[self.sort_index]


def make_grid(n_points: int = 2048, t_window: float = 60.0) -> Grid:
    return Grid(n_points, t_window)


DEFAULT_GRID = (2048, 60.0)


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be positive and finite, got {value!r}")


def soliton_period_meters(t0: float, beta2_abs: float) -> float:
    """Soliton period ``(pi/2) t0^2 / |beta2|`` in metres."""
    _positive("t0", t0)
    _positive("beta2_abs", beta2_abs)
    return 0.5 * math.pi * t0 * t0 / beta2_abs


@dataclass(frozen=True)
class PhysicalMap:
    t0: float
    lambda0: float
    beta2_abs: float

    def __post_init__(self):
        _positive("t0", self.t0)
        _positive("lambda0", self.lambda0)
        _positive("beta2_abs", self.beta2_abs)

    @classmethod
    def from_period(cls, t0: float, lambda0: float, z0: float) -> "PhysicalMap":
        """Build the map from a measured soliton period instead of |beta2|."""
        _positive("z0", z0)
        return cls(t0, lambda0, 0.5 * math.pi * t0 * t0 / z0)

    @property
    def z0(self) -> float:
        return soliton_period_meters(self.t0, self.beta2_abs)

    @property
    def dispersion_length(self) -> float:
        return self.t0 * self.t0 / self.beta2_abs

    def xi_to_meters(self, xi: float) -> float:
        return xi * self.dispersion_length

    def meters_to_xi(self, z: float) -> float:
        return z / self.dispersion_length

    def tau_to_seconds(self, tau):
        return tau * self.t0


def wavelength_to_omega(lam: float, pmap: PhysicalMap) -> float:
    """Dimensionless detuning of vacuum wavelength ``lam`` from the carrier."""
    _positive("lambda", lam)
    return 2.0 * math.pi * C_LIGHT * (1.0 / lam - 1.0 / pmap.lambda0) * pmap.t0


def omega_to_wavelength(omega: float, pmap: PhysicalMap) -> float:
    inv = 1.0 / pmap.lambda0 + omega / (2.0 * math.pi * C_LIGHT * pmap.t0)
    if inv <= 0:
        raise ConfigError(f"omega {omega!r} maps to a non-physical wavelength")
    return 1.0 / inv


# 150 fs sech pulses (FWHM) at 1.5 um with a 1.4 m soliton period.
REGIME_T0 = 150e-15 / SECH_FWHM
REGIME_LAMBDA0 = 1500e-9
REGIME_Z0 = 1.4


def regime_map() -> PhysicalMap:
    return PhysicalMap.from_period(REGIME_T0, REGIME_LAMBDA0, REGIME_Z0)
