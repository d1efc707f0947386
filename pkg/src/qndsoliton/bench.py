"""Semiclassical noise ensembles and the QND figures of merit.

Vacuum fluctuations are added to the mean field as white complex Gaussian
noise (symmetric ordering, half a photon per mode) and propagated with the
full NLSE. Photon numbers are read out per detection band after the knife
edge; detector efficiencies act on the ensemble moments as beam-splitter
loss.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .collision import CollisionSpec, collision_initial
from .errors import ConfigError, EnsembleError, NumericError, PropagationError
from .field import Band, Envelope, band_energy, band_bins, spectral_power
from .nlse import GUARD_EDGE_FRACTION, GUARD_LIMIT, PropagationConfig, propagate_array
from .units import Grid, make_grid

log = logging.getLogger(__name__)

N_BATCHES = 10
CHUNK_ROWS = 125


@dataclass(frozen=True)
class NoiseConfig:
    photons_per_soliton: float = 1e8
    realizations: int = 1000
    seed: int = 20020101
    modulation_depth: float = 1e-3

    def __post_init__(self):
        if not self.photons_per_soliton >= 1e6:
            raise ConfigError("photons_per_soliton must be >= 1e6 for the linearised noise model")
        if int(self.realizations) < 2:
            raise ConfigError("need at least 2 realizations")
        if not 0.0 <= self.modulation_depth <= 1e-2:
            raise ConfigError("modulation_depth must lie in [0, 1e-2]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class DetectionSetup:
    omega_sep: float = 0.0
    omega_cut: float = math.inf
    eta_signal: float = 1.0
    eta_probe: float = 1.0

    def __post_init__(self):
        if not self.omega_sep < self.omega_cut:
            raise ConfigError(f"need omega_sep < omega_cut, got {self.omega_sep} >= {self.omega_cut}")
        for name in ("eta_signal", "eta_probe"):
            eta = getattr(self, name)
            if not 0.0 <= eta <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {eta}")

    def masks(self, grid: Grid):
        """Boolean bin masks: signal ``W < sep``, probe ``sep <= W < cut``, absorbed ``W >= cut``.

        Same half-open convention as :class:`Band`, so the collision bands and the detectors agree.
        """
        w = grid.omega
        if math.isfinite(self.omega_sep) and abs(self.omega_sep) > grid.nyquist:
            raise ConfigError(f"omega_sep {self.omega_sep} outside the grid")
        sig = w < self.omega_sep
        absorbed = w >= self.omega_cut
        prb = ~sig & ~absorbed
        return sig, prb, absorbed

    def ideal(self) -> "DetectionSetup":
        return replace(self, eta_signal=1.0, eta_probe=1.0)


def noise_sigma(grid: Grid, n_ph: float, e0: float) -> float:
    """Standard deviation of each field quadrature per grid point."""
    return math.sqrt(e0 / (4.0 * n_ph * grid.dt))


def realization_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def sample_vacuum_noise(grid: Grid, n_ph: float, e0: float, rng: np.random.Generator) -> Envelope:
    if not n_ph >= 1e6:
        raise ConfigError("photons_per_soliton must be >= 1e6")
    s = noise_sigma(grid, n_ph, e0)
    z = rng.standard_normal((2, grid.n_points))
    return Envelope(grid, s * (z[0] + 1j * z[1]))


def detect_photon_number(u: Envelope, band: Band, n_ph: float, e0: float) -> float:
    """Symmetrically ordered photon-number estimate in ``band`` (half a photon per bin removed)."""
    return n_ph / e0 * band_energy(u, band) - 0.5 * band_bins(u.grid, band)


def apply_efficiency(mean, variance, eta):
    """Beam-splitter loss: ``(eta m, eta^2 v + eta (1 - eta) m)``."""
    if np.any(np.asarray(variance) < 0):
        raise ConfigError("variance must be non-negative")
    if not 0.0 <= eta <= 1.0:
        raise ConfigError(f"efficiency must lie in [0, 1], got {eta}")
    return eta * mean, eta * eta * variance + eta * (1.0 - eta) * mean


def _fmean(x) -> float:
    return math.fsum(x) / len(x)


def _moments(ns: np.ndarray, np_: np.ndarray) -> tuple:
    """Means, unbiased variances and covariance via compensated two-pass sums."""
    r = len(ns)
    ms, mp = _fmean(ns), _fmean(np_)
    ds, dp = ns - ms, np_ - mp
    vs = math.fsum(ds * ds) / (r - 1)
    vp = math.fsum(dp * dp) / (r - 1)
    c = math.fsum(ds * dp) / (r - 1)
    return ms, mp, vs, vp, c


@dataclass
class EnsembleStats:
    """Detected photon numbers per realization and efficiency-corrected moments.

    ``n_signal``/``n_probe`` are ideal (unit efficiency) detector readings;
    ``eta_signal``/``eta_probe`` are folded into every moment accessor.
    """

    n_signal: np.ndarray
    n_probe: np.ndarray
    eta_signal: float = 1.0
    eta_probe: float = 1.0
    filtered_fraction: float = 0.0
    photons_in: float = 0.0  # mean input signal photon number
    setup: Optional[DetectionSetup] = None

    def __post_init__(self):
        self.n_signal = np.asarray(self.n_signal, dtype=float)
        self.n_probe = np.asarray(self.n_probe, dtype=float)
        if self.n_signal.shape != self.n_probe.shape or self.n_signal.ndim != 1:
            raise ConfigError("signal and probe readings must be equal-length 1-D arrays")

    @property
    def realizations(self) -> int:
        return len(self.n_signal)

    def moments(self, idx=None) -> dict:
        ns = self.n_signal if idx is None else self.n_signal[idx]
        np_ = self.n_probe if idx is None else self.n_probe[idx]
        ms, mp, vs, vp, c = _moments(ns, np_)
        ms2, vs2 = apply_efficiency(ms, vs, self.eta_signal)
        mp2, vp2 = apply_efficiency(mp, vp, self.eta_probe)
        return {"mean_signal": ms2, "mean_probe": mp2, "var_signal": vs2,
                "var_probe": vp2, "cov": self.eta_signal * self.eta_probe * c}

    @property
    def means(self) -> np.ndarray:
        m = self.moments()
        return np.array([m["mean_signal"], m["mean_probe"]])

    @property
    def covariance(self) -> np.ndarray:
        m = self.moments()
        return np.array([[m["var_signal"], m["cov"]], [m["cov"], m["var_probe"]]])

    def with_efficiency(self, eta_signal: float, eta_probe: float) -> "EnsembleStats":
        return replace(self, eta_signal=eta_signal, eta_probe=eta_probe)

    def batches(self, n: int = N_BATCHES):
        return np.array_split(np.arange(self.realizations), n)

    def to_dict(self) -> dict:
        m = self.moments()
        out = {k: float(v) for k, v in m.items()}
        out.update(realizations=self.realizations, eta_signal=self.eta_signal,
                   eta_probe=self.eta_probe, filtered_fraction=self.filtered_fraction,
                   photons_in=self.photons_in)
        return out


def _v_from(m: dict) -> tuple:
    if not m["var_probe"] > 0:
        raise NumericError("probe variance is zero; conditional variance undefined")
    a = -m["cov"] / m["var_probe"]
    v = (m["var_signal"] - m["cov"] ** 2 / m["var_probe"]) / m["mean_signal"]
    return v, a


def _c_from(m: dict) -> float:
    if not (m["var_signal"] > 0 and m["var_probe"] > 0):
        raise NumericError("zero variance; correlation undefined")
    return m["cov"] / math.sqrt(m["var_signal"] * m["var_probe"])


@dataclass
class Parabola:
    """Normalized noise of ``n_S + a n_P`` as a function of the attenuation ``a``."""

    var_signal: float
    cov: float
    var_probe: float
    shot: float

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        return (self.var_signal + 2.0 * a * self.cov + a * a * self.var_probe) / self.shot

    @property
    def coefficients(self) -> tuple:
        """``(c2, c1, c0)`` of ``c2 a^2 + c1 a + c0``."""
        return (self.var_probe / self.shot, 2.0 * self.cov / self.shot, self.var_signal / self.shot)


def conditional_variance(stats: EnsembleStats, *, return_parabola: bool = False):
    """``(V, a_opt)``: residual signal noise after optimal probe subtraction, in signal shot units."""
    if stats.realizations < 10:
        raise ConfigError("conditional variance needs at least 10 realizations")
    m = stats.moments()
    v, a = _v_from(m)
    if return_parabola:
        return v, a, Parabola(m["var_signal"], m["cov"], m["var_probe"], m["mean_signal"])
    return v, a


def correlation_coefficient(stats: EnsembleStats) -> float:
    return _c_from(stats.moments())


def noise_parabola(stats: EnsembleStats, a_values: Sequence[float]) -> np.ndarray:
    a_values = np.asarray(a_values, dtype=float)
    if a_values.size == 0:
        raise ConfigError("a_values must be non-empty")
    m = stats.moments()
    return Parabola(m["var_signal"], m["cov"], m["var_probe"], m["mean_signal"])(a_values)


def _batch_se(stats: EnsembleStats, fn) -> float:
    vals = [fn(stats.moments(idx)) for idx in stats.batches()]
    return float(np.std(vals, ddof=1) / math.sqrt(len(vals)))


@dataclass
class QndReport:
    v_conditional: float
    a_opt: float
    correlation: float
    t_signal: float
    t_probe: float
    v_conditional_se: float = 0.0
    a_opt_se: float = 0.0
    correlation_se: float = 0.0
    t_signal_se: float = 0.0
    t_probe_se: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def t_sum(self) -> float:
        return self.t_signal + self.t_probe

    @property
    def t_sum_se(self) -> float:
        return self.extra.get("t_sum_se", math.hypot(self.t_signal_se, self.t_probe_se))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "v_conditional", "a_opt", "correlation", "t_signal", "t_probe",
            "v_conditional_se", "a_opt_se", "correlation_se", "t_signal_se", "t_probe_se")}
        d["t_sum"] = self.t_sum
        d["t_sum_se"] = self.t_sum_se
        d.update(self.extra)
        return d


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class Ensemble:
    """Final spectral powers of every realization; detection is evaluated lazily."""

    grid: Grid
    spec: CollisionSpec
    noise: NoiseConfig
    powers: np.ndarray  # R x n_points, |u~|^2 dW/2pi in FFT order
    mean_power: np.ndarray  # noiseless propagated mean field
    e0: float

    def detect(self, setup: DetectionSetup) -> EnsembleStats:
        sig, prb, absorbed = setup.masks(self.grid)
        scale = self.noise.photons_per_soliton / self.e0
        ns = scale * self.powers[:, sig].sum(axis=1) - 0.5 * np.count_nonzero(sig)
        np_ = scale * self.powers[:, prb].sum(axis=1) - 0.5 * np.count_nonzero(prb)
        return EnsembleStats(ns, np_, setup.eta_signal, setup.eta_probe,
                             filtered_fraction(self.mean_power, self.grid, setup),
                             self.noise.photons_per_soliton * self.spec.amp_signal * 2.0 / self.e0,
                             setup)


def filtered_fraction(power: np.ndarray, grid: Grid, setup: DetectionSetup) -> float:
    """Share of the probe pulse energy (everything above ``omega_sep``) absorbed by the knife edge."""
    sig, prb, absorbed = setup.masks(grid)
    total = power[~sig].sum()
    if total <= 0:
        return 0.0
    return float(power[absorbed].sum() / total)


def place_cut(power: np.ndarray, grid: Grid, omega_sep: float, target: float = 0.18) -> float:
    """Knife-edge position absorbing the closest achievable share ``target`` of the probe energy.

    The cut is placed midway between two grid frequencies so bin assignment is unambiguous.
    """
    if not 0.0 < target < 1.0:
        raise ConfigError("target fraction must lie in (0, 1)")
    w = grid.omega_sorted
    p = power[grid.sort_index]
    above = w >= omega_sep
    w, p = w[above], p[above]
    if p.sum() <= 0:
        raise NumericError("no probe energy above omega_sep")
    # tail[i]: fraction absorbed with the cut just below w[i]
    tail = np.cumsum(p[::-1])[::-1] / p.sum()
    i = int(np.argmin(np.abs(tail - target)))
    return float(w[i] - 0.5 * grid.d_omega)


def _guard_limit(grid: Grid, noise: NoiseConfig, e_total: float, e0: float) -> float:
    n_edge = math.ceil(GUARD_EDGE_FRACTION * grid.n_points)
    photons = noise.photons_per_soliton * e_total / e0 + 0.5 * grid.n_points
    floor = 0.5 * n_edge / photons
    # the vacuum floor is white by construction; only excess above it signals aliasing
    return GUARD_LIMIT + 2.0 * floor


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("QNDSOLITON_THREADS", "1")))
    except ValueError:
        raise ConfigError("QNDSOLITON_THREADS must be an integer")


def run_ensemble_powers(spec: CollisionSpec, noise: NoiseConfig, cfg: PropagationConfig,
                        grid: Optional[Grid] = None, propagate: bool = True,
                        chunk_rows: int = CHUNK_ROWS) -> Ensemble:
    """Propagate ``noise.realizations`` noisy copies of the collision field to the fiber end."""
    import scipy.fft as sfft

    grid = grid or make_grid()
    cfg = cfg.with_length(spec.fiber_length)
    u0 = collision_initial(grid, spec).samples
    e0 = spec.reference_energy()
    sigma = noise_sigma(grid, noise.photons_per_soliton, e0)
    e_total = float(np.sum(np.abs(u0) ** 2) * grid.dt)
    limit = _guard_limit(grid, noise, e_total, e0)
    mean_out = propagate_array(u0, grid, cfg) if propagate else u0
    powers = np.empty((noise.realizations, grid.n_points))
    workers = _thread_count()
    with sfft.set_workers(workers):
        for start in range(0, noise.realizations, chunk_rows):
            stop = min(start + chunk_rows, noise.realizations)
            block = np.empty((stop - start, grid.n_points), dtype=np.complex128)
            for r in range(start, stop):
                z = realization_rng(noise.seed, r).standard_normal((2, grid.n_points))
                block[r - start] = u0 + sigma * (z[0] + 1j * z[1])
            if propagate:
                try:
                    block = propagate_array(block, grid, cfg, guard_limit=limit)
                except PropagationError as exc:
                    row = getattr(exc, "row", 0)
                    raise EnsembleError(str(exc), start + row) from exc
            powers[start:stop] = spectral_power(block, grid)
            log.info("ensemble: %d/%d realizations", stop, noise.realizations)
    return Ensemble(grid, spec, noise, powers, spectral_power(mean_out, grid), e0)


def run_ensemble(spec: CollisionSpec, setup: DetectionSetup, noise: NoiseConfig,
                 cfg: PropagationConfig, grid: Optional[Grid] = None,
                 propagate: bool = True) -> EnsembleStats:
    return run_ensemble_powers(spec, noise, cfg, grid, propagate).detect(setup)


# ---------------------------------------------------------------------------
# transfer coefficients

@dataclass
class Gains:
    g_signal: float
    g_probe: float
    delta_in: float
    photons_in: float


@dataclass
class ModulatedRuns:
    """Noiseless final spectra for the signal amplitude scaled by ``1 + mu`` and ``1 - mu``."""

    grid: Grid
    power_plus: np.ndarray
    power_minus: np.ndarray
    photons_plus: float
    photons_minus: float
    photons_in: float
    scale: float
    mu: float

    def gains(self, setup: DetectionSetup) -> Gains:
        sig, prb, _ = setup.masks(self.grid)
        d_in = self.photons_plus - self.photons_minus
        gs = self.scale * (self.power_plus[sig].sum() - self.power_minus[sig].sum()) / d_in
        gp = self.scale * (self.power_plus[prb].sum() - self.power_minus[prb].sum()) / d_in
        return Gains(float(gs), float(gp), d_in, self.photons_in)


def modulated_runs(spec: CollisionSpec, noise: NoiseConfig, cfg: PropagationConfig,
                   grid: Optional[Grid] = None, mu: Optional[float] = None) -> ModulatedRuns:
    grid = grid or make_grid()
    mu = noise.modulation_depth if mu is None else mu
    if not mu > 0:
        raise NumericError("modulation depth must be positive for transfer gains")
    cfg = cfg.with_length(spec.fiber_length)
    e0 = spec.reference_energy()
    scale = noise.photons_per_soliton / e0
    powers, photons = {}, {}
    for sgn in (+1, -1):
        s2 = spec.with_signal_amplitude(spec.amp_signal * (1 + sgn * mu))
        u = propagate_array(collision_initial(grid, s2).samples, grid, cfg)
        powers[sgn] = spectral_power(u, grid)
        photons[sgn] = scale * 2.0 * s2.amp_signal
    return ModulatedRuns(grid, powers[1], powers[-1], photons[1], photons[-1],
                         scale * 2.0 * spec.amp_signal, scale, mu)


def mean_field_gains(spec: CollisionSpec, setup: DetectionSetup, noise: NoiseConfig,
                     cfg: PropagationConfig, grid: Optional[Grid] = None,
                     mu: Optional[float] = None) -> Gains:
    """Central-difference response of the detected means to a signal amplitude offset ``+-mu``."""
    return modulated_runs(spec, noise, cfg, grid, mu).gains(setup)


def _transfer_from(m: dict, gains: Gains, eta_s: float, eta_p: float) -> dict:
    n_in = gains.photons_in
    # input SNR on the signal detector, shot-noise limited: (eta dn)^2 / (eta n_in)
    snr_in = eta_s / n_in
    if not m["var_signal"] > 0:
        raise NumericError("signal output variance is zero; transfer undefined")
    snr_s = (eta_s * gains.g_signal) ** 2 / m["var_signal"]
    # an empty probe band carries neither modulation nor noise
    snr_p = (eta_p * gains.g_probe) ** 2 / m["var_probe"] if m["var_probe"] > 0 else 0.0
    # probe SNR referred to the signal detector efficiency
    snr_p_corr = snr_p * eta_s / eta_p if eta_p > 0 else 0.0
    shot_s = (eta_s * gains.g_signal) ** 2 / m["mean_signal"]
    shot_p = (eta_p * gains.g_probe) ** 2 / m["mean_probe"] * (eta_s / eta_p) if m["mean_probe"] > 0 else 0.0
    return {"t_signal": snr_s / snr_in, "t_probe": snr_p_corr / snr_in,
            "t_signal_shot": shot_s / snr_in, "t_probe_shot": shot_p / snr_in}


def transfer_coefficients(spec: CollisionSpec, setup: DetectionSetup, noise: NoiseConfig,
                          cfg: PropagationConfig, stats: EnsembleStats,
                          grid: Optional[Grid] = None, gains: Optional[Gains] = None,
                          shot_normalized: bool = False) -> tuple:
    """``(T_S, T_P)`` from mean-field gains and the unmodulated ensemble noise.

    With ``shot_normalized`` the output SNRs use the mean photon number instead of the
    measured output variance.
    """
    if gains is None:
        gains = mean_field_gains(spec, setup, noise, cfg, grid)
    t = _transfer_from(stats.moments(), gains, stats.eta_signal, stats.eta_probe)
    if shot_normalized:
        return t["t_signal_shot"], t["t_probe_shot"]
    return t["t_signal"], t["t_probe"]


def qnd_report(stats: EnsembleStats, gains: Optional[Gains] = None) -> QndReport:
    m = stats.moments()
    v, a = _v_from(m)
    c = _c_from(m)
    extra = {"mean_signal": m["mean_signal"], "mean_probe": m["mean_probe"],
             "var_signal": m["var_signal"], "var_probe": m["var_probe"], "cov": m["cov"],
             "signal_noise": m["var_signal"] / m["mean_signal"],
             "filtered_fraction": stats.filtered_fraction,
             "eta_signal": stats.eta_signal, "eta_probe": stats.eta_probe,
             "realizations": stats.realizations}
    ts = tp = ts_se = tp_se = 0.0
    if gains is not None:
        t = _transfer_from(m, gains, stats.eta_signal, stats.eta_probe)
        ts, tp = t["t_signal"], t["t_probe"]
        extra.update(t_signal_shot=t["t_signal_shot"], t_probe_shot=t["t_probe_shot"],
                     g_signal=gains.g_signal, g_probe=gains.g_probe, photons_in=gains.photons_in)

        def fn(mm, key):
            return _transfer_from(mm, gains, stats.eta_signal, stats.eta_probe)[key]

        ts_se = _batch_se(stats, lambda mm: fn(mm, "t_signal"))
        tp_se = _batch_se(stats, lambda mm: fn(mm, "t_probe"))
        extra["t_sum_se"] = _batch_se(stats, lambda mm: fn(mm, "t_signal") + fn(mm, "t_probe"))
    return QndReport(
        v_conditional=v, a_opt=a, correlation=c, t_signal=ts, t_probe=tp,
        v_conditional_se=_batch_se(stats, lambda mm: _v_from(mm)[0]),
        a_opt_se=_batch_se(stats, lambda mm: _v_from(mm)[1]),
        correlation_se=_batch_se(stats, _c_from),
        t_signal_se=ts_se, t_probe_se=tp_se, extra=extra)
