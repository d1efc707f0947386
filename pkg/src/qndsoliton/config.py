"""Run configuration: YAML file -> validated :class:`RunConfig`.

A config may name a bundled ``preset``; its keys are deep-merged under the
file's own keys. Wavelength keys (``lambda_sep``, ``lambda_filt``) are
converted through the physical map.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .bench import DetectionSetup, NoiseConfig
from .collision import CollisionSpec
from .errors import ConfigError
from .nlse import PropagationConfig
from .units import Grid, PhysicalMap, make_grid, regime_map, wavelength_to_omega

SCENARIOS = ("evolve", "collide", "noise", "transfer", "sweep")
SWEEP_AXES = ("omega_cut", "omega_sep", "relative_phase", "omega0")

DEFAULTS: dict = {
    "scenario": None,
    "output_dir": "out",
    "grid": {"n_points": 2048, "t_window": 60.0},
    "physical": {"t0": None, "lambda0": None, "z0": None, "beta2_abs": None},
    "collision": {
        "omega0": 1.2, "fiber_length": None, "fiber_periods": None,
        "amp_signal": 1.0, "amp_probe": 1.0, "relative_phase": 0.0, "drift": 0.0,
        "probe_present": True, "tune": True, "launch_offset": 0.0,
    },
    "detection": {
        "omega_sep": 0.0, "omega_cut": "auto", "lambda_sep": None, "lambda_filt": None,
        "filtered_target": 0.18, "eta_signal": 1.0, "eta_probe": 1.0,
    },
    "noise": {"photons_per_soliton": 1e8, "realizations": 1000, "seed": 20020101,
              "modulation_depth": 1e-3},
    "propagation": {"step": 1e-3},
    "evolve": {"rows": 101, "extent": 1.0},
    "parabola": {"a_min": -2.0, "a_max": 2.0, "a_step": 0.05},
    "cut_scan": [],
    "transfer": {"shot_normalized": False},
    "sweep": {axis: [] for axis in SWEEP_AXES},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_preset(name: str) -> dict:
    try:
        text = resources.files("qndsoliton").joinpath("presets", f"{name}.yaml").read_text()
    except FileNotFoundError:
        raise ConfigError(f"unknown preset {name!r}") from None
    return yaml.safe_load(text) or {}


def _check_keys(raw: dict, ref: dict, where: str = "") -> None:
    for k, v in raw.items():
        if k == "preset":
            continue
        if k not in ref:
            raise ConfigError(f"unknown config key {where}{k!r}")
        if isinstance(v, dict) and isinstance(ref[k], dict) and k != "sweep":
            _check_keys(v, ref[k], f"{where}{k}.")


def _num(section: dict, key: str, where: str):
    v = section.get(key)
    if v is None:
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}") from None


@dataclass
class RunConfig:
    scenario: Optional[str]
    output_dir: Path
    grid: Grid
    pmap: PhysicalMap
    spec: CollisionSpec
    tune: bool
    setup: DetectionSetup
    cut_auto: bool
    filtered_target: float
    noise: NoiseConfig
    prop: PropagationConfig
    evolve_rows: int
    evolve_extent: float
    parabola_a: list
    cut_scan: list
    shot_normalized: bool
    sweep: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def config_hash(self) -> str:
        # where the files go is not part of what was computed
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def build_config(raw: dict, *, scenario: Optional[str] = None, output_dir=None,
                 seed: Optional[int] = None) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping")
    preset = raw.get("preset")
    _check_keys(raw, DEFAULTS)
    merged = _merge(DEFAULTS, load_preset(preset) if preset else {})
    user_coll = raw.get("collision") or {}
    # an explicit length in the file replaces the preset's length in the other unit
    for a, b in (("fiber_length", "fiber_periods"), ("fiber_periods", "fiber_length")):
        if a in user_coll and b not in user_coll:
            merged["collision"][b] = None
    user_det = raw.get("detection") or {}
    for a, b in (("omega_sep", "lambda_sep"), ("omega_cut", "lambda_filt")):
        if a in user_det and b not in user_det:
            merged["detection"][b] = None
    merged = _merge(merged, {k: v for k, v in raw.items() if k != "preset"})
    if scenario is not None:
        merged["scenario"] = scenario
    if output_dir is not None:
        merged["output_dir"] = str(output_dir)
    if seed is not None:
        merged["noise"]["seed"] = int(seed)
    if merged["scenario"] is not None and merged["scenario"] not in SCENARIOS:
        raise ConfigError(f"unknown scenario {merged['scenario']!r}; choose from {SCENARIOS}")

    g = merged["grid"]
    try:
        grid = make_grid(int(g["n_points"]), float(g["t_window"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid section: {exc}") from None

    ph = merged["physical"]
    base = regime_map()
    t0 = _num(ph, "t0", "physical") or base.t0
    lam0 = _num(ph, "lambda0", "physical") or base.lambda0
    if ph.get("beta2_abs") is not None:
        pmap = PhysicalMap(t0, lam0, _num(ph, "beta2_abs", "physical"))
    else:
        pmap = PhysicalMap.from_period(t0, lam0, _num(ph, "z0", "physical") or base.z0)

    c = merged["collision"]
    if c.get("fiber_length") is not None and c.get("fiber_periods") is not None:
        raise ConfigError("give collision.fiber_length or collision.fiber_periods, not both")
    if c.get("fiber_periods") is not None:
        length = _num(c, "fiber_periods", "collision") * math.pi / 2.0
    elif c.get("fiber_length") is not None:
        length = _num(c, "fiber_length", "collision")
    else:
        raise ConfigError("collision.fiber_length (or fiber_periods) is required")
    spec = CollisionSpec(
        omega0=_num(c, "omega0", "collision"), fiber_length=length,
        amp_signal=_num(c, "amp_signal", "collision"), amp_probe=_num(c, "amp_probe", "collision"),
        relative_phase=_num(c, "relative_phase", "collision"), drift=_num(c, "drift", "collision"),
        launch_offset=_num(c, "launch_offset", "collision"),
        probe_present=bool(c.get("probe_present", True)))

    d = merged["detection"]
    if d.get("lambda_sep") is not None:
        omega_sep = wavelength_to_omega(_num(d, "lambda_sep", "detection"), pmap)
    else:
        omega_sep = _num(d, "omega_sep", "detection")
    cut_auto = False
    if d.get("lambda_filt") is not None:
        omega_cut = wavelength_to_omega(_num(d, "lambda_filt", "detection"), pmap)
    elif d.get("omega_cut") in ("auto", None):
        cut_auto = True
        omega_cut = math.inf
    elif d.get("omega_cut") in ("none", "inf", math.inf):
        omega_cut = math.inf
    else:
        omega_cut = _num(d, "omega_cut", "detection")
    setup = DetectionSetup(omega_sep, omega_cut, _num(d, "eta_signal", "detection"),
                           _num(d, "eta_probe", "detection"))
    target = _num(d, "filtered_target", "detection")
    if not 0 < target < 1:
        raise ConfigError("detection.filtered_target must lie in (0, 1)")

    n = merged["noise"]
    try:
        noise = NoiseConfig(float(n["photons_per_soliton"]), int(n["realizations"]),
                            int(n["seed"]), float(n["modulation_depth"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad noise section: {exc}") from None

    prop = PropagationConfig(step=_num(merged["propagation"], "step", "propagation"), length=0.0)

    ev = merged["evolve"]
    rows = int(ev["rows"])
    if rows < 2:
        raise ConfigError("evolve.rows must be >= 2")
    extent = float(ev["extent"])
    if not extent > 0:
        raise ConfigError("evolve.extent must be positive")

    pa = merged["parabola"]
    a_min, a_max, a_step = float(pa["a_min"]), float(pa["a_max"]), float(pa["a_step"])
    if not (a_max > a_min and a_step > 0):
        raise ConfigError("parabola needs a_max > a_min and a_step > 0")
    n_a = int(round((a_max - a_min) / a_step)) + 1
    a_values = [a_min + i * a_step for i in range(n_a)]

    sweep = {}
    for axis, values in (merged.get("sweep") or {}).items():
        if axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
        if values is None:
            values = []
        if not isinstance(values, list):
            raise ConfigError(f"sweep.{axis} must be a list")
        try:
            sweep[axis] = [float(v) for v in values]
        except (TypeError, ValueError):
            raise ConfigError(f"sweep.{axis} must hold numbers") from None
    if merged["scenario"] == "sweep":
        if not any(sweep.values()):
            raise ConfigError("sweep scenario needs at least one non-empty sweep axis")
        for axis, values in sweep.items():
            if values == [] and axis in (raw.get("sweep") or {}):
                raise ConfigError(f"sweep axis {axis!r} is empty")

    cut_scan = merged.get("cut_scan") or []
    if not isinstance(cut_scan, list):
        raise ConfigError("cut_scan must be a list of omega_cut values")

    return RunConfig(
        scenario=merged["scenario"], output_dir=Path(merged["output_dir"]), grid=grid, pmap=pmap,
        spec=spec, tune=bool(c.get("tune", True)), setup=setup, cut_auto=cut_auto,
        filtered_target=target, noise=noise, prop=prop, evolve_rows=rows, evolve_extent=extent,
        parabola_a=a_values, cut_scan=[float(x) for x in cut_scan],
        shot_normalized=bool(merged["transfer"]["shot_normalized"]),
        sweep=sweep, raw=merged)


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return build_config(raw or {}, **overrides)
