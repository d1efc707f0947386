"""Scenario orchestration and file emission (CSV + JSON)."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import platform
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .bench import (DetectionSetup, Ensemble, EnsembleStats, ModulatedRuns, QndReport,
                    conditional_variance, modulated_runs, noise_parabola, place_cut,
                    qnd_report, run_ensemble_powers)
from .collision import evolution_map, run_collision, tune_collision_center
from .config import RunConfig
from .errors import NumericError, OutputError, QndError
from .field import spectral_power, write_envelope_csv, write_spectrum_csv
from .nlse import propagate_array
from .units import omega_to_wavelength

log = logging.getLogger(__name__)


def _g(x) -> str:
    return f"{float(x):.17g}"


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_g(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_matrix(path: Path, row_name: str, row_values, col_values, matrix) -> None:
    """Header ``row_name, c_0, c_1, ...`` then one line per row value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([row_name] + [_g(c) for c in col_values])
        for r, line in zip(row_values, matrix):
            w.writerow([_g(r)] + [_g(v) for v in line])


def prepare_output(out_dir: Path) -> Path:
    """Create the output directory and prove it is writable before any compute."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("ok")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {out_dir} is not writable: {exc}") from exc
    return out_dir


def provenance(cfg: RunConfig) -> dict:
    return {
        "package": "qndsoliton",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "config_hash": cfg.config_hash,
        "seed": cfg.noise.seed,
    }


def _write_meta(cfg: RunConfig, out: Path, files, started: float, extra=None) -> Path:
    meta = {
        "scenario": cfg.scenario,
        "config": cfg.raw,
        "provenance": provenance(cfg),
        "files": sorted(files),
        "runtime_s": time.perf_counter() - started,
    }
    if extra:
        meta.update(extra)
    path = out / "meta.json"
    write_json(path, meta)
    return path


def _spec_record(spec) -> dict:
    return asdict(spec)


def resolve_spec(cfg: RunConfig, spec=None):
    """Collision spec with its centre tuned onto the fiber end (when requested)."""
    spec = spec or cfg.spec
    if not (cfg.tune and spec.probe_present):
        return spec, None
    res = tune_collision_center(spec, cfg.prop, cfg.grid)
    info = {"offset": res.offset, "probe_shift": res.probe_shift, "iterations": res.iterations}
    log.info("tuned launch offset %.6g (probe shift %.6g)", res.offset, res.probe_shift)
    return res.spec, info


def resolve_setup(cfg: RunConfig, mean_power: np.ndarray, setup=None) -> DetectionSetup:
    setup = setup or cfg.setup
    if cfg.cut_auto:
        cut = place_cut(mean_power, cfg.grid, setup.omega_sep, cfg.filtered_target)
        setup = replace(setup, omega_cut=cut)
    return setup


def _band_wavelengths(cfg: RunConfig, setup: DetectionSetup) -> dict:
    out = {}
    for name, w in (("lambda_sep", setup.omega_sep), ("lambda_filt", setup.omega_cut)):
        try:
            out[name] = omega_to_wavelength(w, cfg.pmap) if math.isfinite(w) else None
        except QndError:
            out[name] = None
    return out


# ---------------------------------------------------------------------------

def scenario_evolve(cfg: RunConfig) -> list:
    started = time.perf_counter()
    out = prepare_output(cfg.output_dir)
    spec, tuning = resolve_spec(cfg)
    emap = evolution_map(spec, cfg.prop, cfg.evolve_rows, cfg.grid,
                         length=cfg.evolve_extent * spec.fiber_length)
    files = []
    p = out / "evolution_time.csv"
    write_matrix(p, "xi", emap.xi, emap.tau, emap.time_power)
    files.append(p.name)
    p = out / "evolution_spectrum.csv"
    write_matrix(p, "xi", emap.xi, emap.omega, emap.spectral_power)
    files.append(p.name)
    sep = emap.spectral_separation()
    extra = {"spec": _spec_record(spec), "tuning": tuning,
             "max_spectral_separation": float(sep.max()),
             "initial_spectral_separation": float(sep[0]),
             "xi_max_separation": float(emap.xi[int(np.argmax(sep))])}
    files.append(_write_meta(cfg, out, files, started, extra).name)
    return [out / f for f in files]


def scenario_collide(cfg: RunConfig) -> list:
    started = time.perf_counter()
    out = prepare_output(cfg.output_dir)
    spec, tuning = resolve_spec(cfg)
    res = run_collision(spec, cfg.prop, cfg.grid, cfg.pmap)
    rec = res.to_record()
    rec["tuning"] = tuning
    files = []
    p = out / "collision.json"
    write_json(p, rec)
    files.append(p.name)
    p = out / "final_field.csv"
    write_envelope_csv(p, res.final_field)
    files.append(p.name)
    p = out / "final_spectrum.csv"
    write_spectrum_csv(p, res.final_field)
    files.append(p.name)
    files.append(_write_meta(cfg, out, files, started, {"spec": _spec_record(spec)}).name)
    return [out / f for f in files]


def _report_row(stats: EnsembleStats, runs: ModulatedRuns, setup: DetectionSetup) -> dict:
    rep = qnd_report(stats, runs.gains(setup))
    d = rep.to_dict()
    d["filtered_fraction"] = stats.filtered_fraction
    return d


SCAN_COLUMNS = ["omega_cut", "filtered_fraction", "eta_signal", "eta_probe",
                "correlation", "correlation_se", "v_conditional", "v_conditional_se",
                "t_signal", "t_signal_se", "t_probe", "t_probe_se", "t_sum", "t_sum_se"]


def cut_scan(ens: Ensemble, runs: ModulatedRuns, setup: DetectionSetup, cuts) -> list:
    """QND figures for each knife-edge position, at unit and at configured efficiencies."""
    rows = []
    for cut in cuts:
        s = replace(setup, omega_cut=float(cut))
        for eff in (s.ideal(), s):
            st = ens.detect(eff)
            d = _report_row(st, runs, eff)
            rows.append({"omega_cut": float(cut), "eta_signal": eff.eta_signal,
                         "eta_probe": eff.eta_probe, **{k: d[k] for k in SCAN_COLUMNS[4:]},
                         "filtered_fraction": st.filtered_fraction})
            if eff == s:
                break
    return rows


def _noise_common(cfg: RunConfig, spec):
    ens = run_ensemble_powers(spec, cfg.noise, cfg.prop, cfg.grid)
    setup = resolve_setup(cfg, ens.mean_power)
    runs = modulated_runs(spec, cfg.noise, cfg.prop, cfg.grid)
    return ens, setup, runs


def scenario_noise(cfg: RunConfig) -> list:
    started = time.perf_counter()
    out = prepare_output(cfg.output_dir)
    spec, tuning = resolve_spec(cfg)
    ens, setup, runs = _noise_common(cfg, spec)
    stats = ens.detect(setup)
    ideal = ens.detect(setup.ideal())
    report = qnd_report(stats, runs.gains(setup))
    report_ideal = qnd_report(ideal, runs.gains(setup))
    files = []

    p = out / "parabola.csv"
    a = np.asarray(cfg.parabola_a)
    noise = noise_parabola(stats, a)
    write_rows(p, ["a", "normalized_noise", "shot_reference"],
               [(float(ai), float(ni), 1.0) for ai, ni in zip(a, noise)])
    files.append(p.name)

    p = out / "report.json"
    write_json(p, {
        "report": report.to_dict(),
        "report_ideal_efficiency": report_ideal.to_dict(),
        "ensemble": stats.to_dict(),
        "setup": asdict(setup),
        "band_wavelengths": _band_wavelengths(cfg, setup),
        "spec": _spec_record(spec),
        "tuning": tuning,
        "provenance": provenance(cfg),
    })
    files.append(p.name)

    cuts = sorted(set(cfg.cut_scan) | ({setup.omega_cut} if math.isfinite(setup.omega_cut) else set()))
    if cuts:
        p = out / "cut_scan.csv"
        rows = cut_scan(ens, runs, setup, cuts)
        write_rows(p, SCAN_COLUMNS, [[r[c] for c in SCAN_COLUMNS] for r in rows])
        files.append(p.name)
    files.append(_write_meta(cfg, out, files, started).name)
    return [out / f for f in files]


def scenario_transfer(cfg: RunConfig) -> list:
    started = time.perf_counter()
    out = prepare_output(cfg.output_dir)
    spec, tuning = resolve_spec(cfg)
    if not cfg.noise.modulation_depth > 0:
        raise NumericError("transfer scenario needs modulation_depth > 0")
    ens, setup, runs = _noise_common(cfg, spec)
    runs_half = modulated_runs(spec, cfg.noise, cfg.prop, cfg.grid, mu=0.5 * cfg.noise.modulation_depth)
    result = {}
    for label, eff in (("configured_efficiency", setup), ("ideal_efficiency", setup.ideal())):
        stats = ens.detect(eff)
        g, gh = runs.gains(eff), runs_half.gains(eff)
        rep = qnd_report(stats, g)
        rep_h = qnd_report(stats, gh)
        primary = ("t_signal_shot", "t_probe_shot") if cfg.shot_normalized else ("t_signal", "t_probe")
        d = rep.to_dict()
        result[label] = {
            "t_signal": d[primary[0]], "t_probe": d[primary[1]],
            "t_sum": d[primary[0]] + d[primary[1]],
            "t_signal_se": rep.t_signal_se, "t_probe_se": rep.t_probe_se, "t_sum_se": rep.t_sum_se,
            "variance_normalized": {"t_signal": rep.t_signal, "t_probe": rep.t_probe},
            "shot_normalized": {"t_signal": d["t_signal_shot"], "t_probe": d["t_probe_shot"]},
            "gains": {"g_signal": g.g_signal, "g_probe": g.g_probe,
                      "delta_photons_in": g.delta_in, "photons_in": g.photons_in},
            "half_modulation": {"t_signal": rep_h.t_signal, "t_probe": rep_h.t_probe,
                                "g_signal": gh.g_signal, "g_probe": gh.g_probe},
            "linearity": {
                "t_signal_rel_change": _rel(rep_h.t_signal, rep.t_signal),
                "t_probe_rel_change": _rel(rep_h.t_probe, rep.t_probe),
            },
            "eta_signal": eff.eta_signal, "eta_probe": eff.eta_probe,
        }
    files = []
    p = out / "report.json"
    write_json(p, {"transfer": result, "normalization": "shot" if cfg.shot_normalized else "variance",
                   "modulation_depth": cfg.noise.modulation_depth,
                   "ensemble": ens.detect(setup).to_dict(), "setup": asdict(setup),
                   "spec": _spec_record(spec), "tuning": tuning, "provenance": provenance(cfg)})
    files.append(p.name)
    files.append(_write_meta(cfg, out, files, started).name)
    return [out / f for f in files]


def _rel(a, b) -> float:
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return abs(a - b) / abs(b)


SWEEP_COLUMNS = ["omega0", "relative_phase", "omega_sep", "omega_cut", "filtered_fraction",
                 "v_conditional", "v_conditional_se", "correlation", "correlation_se",
                 "t_signal", "t_signal_se", "t_probe", "t_probe_se", "t_sum", "t_sum_se",
                 "status"]


def scenario_sweep(cfg: RunConfig) -> tuple:
    """Cartesian sweep; returns (files, n_failed)."""
    started = time.perf_counter()
    out = prepare_output(cfg.output_dir)
    axes = cfg.sweep
    om_values = axes.get("omega0") or [cfg.spec.omega0]
    ph_values = axes.get("relative_phase") or [cfg.spec.relative_phase]
    sep_values = axes.get("omega_sep") or [cfg.setup.omega_sep]
    cut_values = axes.get("omega_cut") or [None]
    rows, failed = [], 0
    for om, ph in itertools.product(om_values, ph_values):
        base = replace(cfg.spec, omega0=om, relative_phase=ph)
        try:
            spec, _ = resolve_spec(cfg, base)
            ens = run_ensemble_powers(spec, cfg.noise, cfg.prop, cfg.grid)
            runs = modulated_runs(spec, cfg.noise, cfg.prop, cfg.grid)
        except QndError as exc:
            log.error("sweep point omega0=%g phase=%g failed: %s", om, ph, exc)
            for sep, cut in itertools.product(sep_values, cut_values):
                rows.append(_failed_row(om, ph, sep, cut, exc))
                failed += 1
            continue
        for sep, cut in itertools.product(sep_values, cut_values):
            try:
                setup = replace(cfg.setup, omega_sep=sep)
                if cut is None:
                    setup = resolve_setup(cfg, ens.mean_power, setup)
                else:
                    setup = replace(setup, omega_cut=cut)
                st = ens.detect(setup)
                d = _report_row(st, runs, setup)
                rows.append([om, ph, sep, setup.omega_cut, st.filtered_fraction,
                             *(d[c] for c in SWEEP_COLUMNS[5:-1]), "ok"])
            except QndError as exc:
                log.error("sweep point omega0=%g phase=%g sep=%g cut=%s failed: %s",
                          om, ph, sep, cut, exc)
                rows.append(_failed_row(om, ph, sep, cut, exc))
                failed += 1
    p = out / "sweep.csv"
    write_rows(p, SWEEP_COLUMNS, rows)
    files = [p.name]
    files.append(_write_meta(cfg, out, files, started, {"failed_points": failed}).name)
    return [out / f for f in files], failed


def _failed_row(om, ph, sep, cut, exc):
    nan = float("nan")
    return [om, ph, sep, nan if cut is None else cut] + [nan] * (len(SWEEP_COLUMNS) - 5) + \
        [f"failed: {type(exc).__name__}"]


SCENARIO_FUNCS = {
    "evolve": scenario_evolve,
    "collide": scenario_collide,
    "noise": scenario_noise,
    "transfer": scenario_transfer,
    "sweep": scenario_sweep,
}
