"""Run configuration: loading, validation with field paths, object construction."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .artifacts import load_schema, read_waveform_csv
from .gem_analytic import GemParams, RetrievalParams
from .gfc_analytic import GfcParams
from .signals import Waveform, delta_approx_input, expdecay_input, gaussian_input
from .simulator import SimGrid

__all__ = ["ConfigError", "load_config", "load_preset", "list_presets", "validate_config",
           "config_hash", "get_path", "set_path", "build_gem", "build_gfc", "build_grid",
           "build_input", "Physics"]


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _path_str(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def load_config(path) -> tuple[dict, Path]:
    """Parse a JSON config; returns the document and its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", "--config")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          str(path)) from exc
    if not isinstance(cfg, dict):
        raise ConfigError("top level must be a JSON object")
    return cfg, path.parent


def list_presets() -> list[str]:
    files = resources.files("gemfc.presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def load_preset(name: str) -> dict:
    res = resources.files("gemfc.presets").joinpath(f"{name}.json")
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}",
                          "--preset")
    return json.loads(res.read_text())


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


def get_path(cfg: dict, dotted: str):
    node = cfg
    for key in dotted.split("."):
        if not isinstance(node, dict) or key not in node:
            raise KeyError(dotted)
        node = node[key]
    return node


def set_path(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with the dotted field replaced."""
    out = copy.deepcopy(cfg)
    node = out
    keys = dotted.split(".")
    for key in keys[:-1]:
        node = node[key]
    node[keys[-1]] = value
    return out


def validate_config(cfg: dict, base_dir: Path | None = None) -> None:
    """Schema check plus semantic checks; raises ConfigError with a field path."""
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(err.message, _path_str(err.absolute_path))
    mode = cfg["mode"]
    gfc = cfg.get("physics", {}).get("gfc")
    if gfc is not None and gfc["M"] % 2 != 1:
        raise ConfigError("M must be odd", "physics.gfc.M")
    if "grid" in cfg:
        t0, t1 = cfg["grid"]["t_range"]
        if not t1 > t0:
            raise ConfigError("t_range must be increasing", "grid.t_range")
        if "gem" in cfg.get("physics", {}) and mode in ("gem-store", "gem-recall", "compare"):
            nt = cfg["grid"]["nt"]
            dt = (t1 - t0) / (nt - 1)
            k = -t0 / dt
            if not (t0 < 0 <= t1) or abs(k - round(k)) > 1e-6:
                raise ConfigError("GEM time grids must have t = 0 as a node", "grid.t_range")
    inp = cfg.get("input")
    if inp is not None and inp["kind"] == "samples-file":
        p = Path(inp["path"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        if not p.is_file():
            raise ConfigError(f"samples file not found: {p}", "input.path")
    if mode == "sweep":
        sw = cfg["sweep"]
        for i, ax in enumerate(sw["axes"]):
            try:
                get_path(cfg, ax["param"])
            except KeyError:
                raise ConfigError(f"sweep axis names no config field: {ax['param']}",
                                  f"sweep.axes[{i}].param") from None
            if ax.get("scale") == "log" and not (ax["min"] > 0 and ax["max"] > 0):
                raise ConfigError("log axes need positive bounds", f"sweep.axes[{i}]")
        if sw.get("combine") == "zip":
            counts = {len(axis_values(ax)) for ax in sw["axes"]}
            if len(counts) != 1:
                raise ConfigError("zipped axes must have equal lengths", "sweep.axes")
        if sw.get("evaluate", "run") == "run":
            inner = sw.get("mode", "gem-recall")
            for key in ("input", "grid"):
                if key not in cfg:
                    raise ConfigError(f"sweep runs of mode {inner} need '{key}'", key)


def axis_values(ax: dict) -> list:
    if "values" in ax:
        return list(ax["values"])
    lo, hi, n = ax["min"], ax["max"], ax["count"]
    if ax.get("scale", "linear") == "log":
        return [float(v) for v in np.geomspace(lo, hi, n)]
    return [float(v) for v in np.linspace(lo, hi, n)]


@dataclass(frozen=True)
class Physics:
    gem: GemParams | None = None
    retrieval: RetrievalParams | None = None
    gfc: GfcParams | None = None
    time_unit_seconds: float | None = None

    def groups(self) -> dict:
        if self.gfc is not None:
            return self.gfc.groups()
        p, r = self.gem, self.retrieval
        return {"mu": p.mu, "beta_L_T": p.beta * p.L * p.T, "gN2_L_T": p.gN2 * p.L * p.T,
                "zeta": p.zeta, "gamma_T": p.gamma * p.T, "omega_m_T": p.omega_m * p.T,
                "mu_prime": r.mu_prime, "beta_prime_L_T": r.beta_prime * p.L * p.T,
                "omega_m_prime_T": r.omega_m_prime * p.T}


def build_gem(cfg: dict) -> Physics:
    g = cfg["physics"]["gem"]
    if "physical" in g:
        ph = g["physical"]
        T, L = ph["T"], ph["L"]
        if ph["beta"] == 0:
            raise ConfigError("beta must be nonzero", "physics.gem.physical.beta")
        mu = ph["gN2"] / ph["beta"]
        bLT = ph["beta"] * L * T
        gT = ph.get("gamma", 0.0) * T
        wT = ph.get("omega_m", 0.0) * T
        unit = T
    else:
        mu, bLT = g["mu"], g["beta_L_T"]
        gT, wT = g.get("gamma_T", 0.0), g.get("omega_m_T", 0.0)
        unit = None
    if bLT == 0:
        raise ConfigError("beta_L_T must be nonzero", "physics.gem.beta_L_T")
    p = GemParams.from_groups(mu, bLT, gT, wT, g.get("g_phase", 0.0))
    rr = g.get("retrieval", {})
    r = RetrievalParams(rr.get("beta_ratio", -1.0) * p.beta, rr.get("gN2_ratio", 1.0) * p.gN2,
                        rr.get("omega_m_prime_T", p.omega_m))
    return Physics(gem=p, retrieval=r, time_unit_seconds=unit)


def build_gfc(cfg: dict) -> Physics:
    g = cfg["physics"]["gfc"]
    F = g.get("F", "inf")
    F = math.inf if F == "inf" else float(F)
    unit = None
    if "physical" in g:
        ph = g["physical"]
        phys = GfcParams.from_physical(g["variant"], g["M"], F, g["F_prime"], g["mu"],
                                       ph["gN2"], ph["beta_L"])
        unit = phys.T0
    try:
        p = GfcParams.from_groups(g["variant"], g["M"], g["F_prime"], g["mu"], F, T0=1.0)
    except ValueError as exc:
        raise ConfigError(str(exc), "physics.gfc") from exc
    return Physics(gfc=p, time_unit_seconds=unit)


def build_physics(cfg: dict) -> Physics:
    phys = cfg["physics"]
    return build_gem(cfg) if "gem" in phys else build_gfc(cfg)


def build_grid(cfg: dict) -> SimGrid:
    g = cfg["grid"]
    return SimGrid(g["nz"], g["nt"], tuple(g["t_range"]), g.get("store_every", 1))


def build_input(cfg: dict, physics: Physics, grid: SimGrid, base_dir: Path | None = None) -> Waveform:
    """Input waveform sampled on the simulation time grid.

    With a physical-units physics block, t_in, fwhm and width are read in
    seconds and rescaled to the normalised time unit (T or T0).
    """
    inp = cfg["input"]
    scale = 1.0 if physics.time_unit_seconds is None else 1.0 / physics.time_unit_seconds
    t0, t1 = grid.t_range
    kind = inp["kind"]
    if kind == "gaussian":
        return gaussian_input(inp["t_in"] * scale, inp["fwhm"] * scale, t0, t1, grid.nt)
    if kind == "expdecay":
        gamma = physics.gem.gamma if physics.gem is not None else physics.gfc.gamma
        w = expdecay_input(inp["t_in"] * scale, gamma, t0, t1, grid.nt)
        return w
    if kind == "delta-approx":
        return delta_approx_input(inp["t_in"] * scale, inp["width"] * scale, t0, t1, grid.nt)
    p = Path(inp["path"])
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    w = read_waveform_csv(p)
    if np.isclose(w.dt, grid.dt, rtol=1e-12) and np.isclose(w.t0, t0, rtol=0, atol=1e-12 * grid.dt) \
            and len(w) == grid.nt:
        return w
    return Waveform(t0, grid.dt, w.at(grid.times))
