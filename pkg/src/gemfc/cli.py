"""Experiment runner: config ingestion, per-mode drivers, sweeps, file emission.

Usage::

    gemfc --config run.json --out-dir out [--jobs N] [--tolerance-profile fast|strict]
    gemfc --preset fig7 --out-dir out
    gemfc --list-presets

Exit status: 0 success, 2 validation error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import specfun
from .artifacts import (SCHEMA_VERSION, emit_grid_csv, emit_manifest_json, emit_report_json,
                        emit_waveform_csv, to_jsonable)
from .config import (ConfigError, Physics, axis_values, build_grid, build_input, build_physics,
                     config_hash, list_presets, load_config, load_preset, set_path,
                     validate_config)
from .gem_analytic import (closed_form_expdecay, is_symmetric, retrieval_echo, storage_evolve)
from .gfc_analytic import (AliasingError, EchoSeries, GfcParams, first_echo_efficiency,
                           first_five_echoes, propagate_via_transfer, thin_medium_echoes)
from .metrics import MetricsError, echo_partition, evaluate
from .signals import CoherenceGrid, FieldGrid, Waveform
from .simulator import SimGrid, SimulationError, energy_budget, simulate_gem, simulate_gfc

__all__ = ["main", "run", "emit_waveform_csv", "emit_grid_csv", "emit_report_json",
           "EXIT_OK", "EXIT_VALIDATION", "EXIT_SOLVER"]

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3
DEFAULT_L2 = 0.02
DEFAULT_PEAK = 0.05
PROFILES = {"fast": specfun.EvalControl(rel_tol=1e-8), "strict": specfun.EvalControl(rel_tol=1e-10)}


class _Ctx:
    def __init__(self, cfg: dict, base_dir: Path | None, out_dir: Path | None, profile: str):
        self.cfg = cfg
        self.base_dir = base_dir
        self.out_dir = out_dir
        self.profile = profile
        self.ctl = PROFILES[profile]
        self.artifacts: list[str] = []

    def wants(self, kind: str, default: bool = False) -> tuple[bool, tuple[int, int]]:
        outs = self.cfg.get("outputs")
        if outs is None:
            return default, (1, 1)
        for o in outs:
            if o == kind:
                return True, (1, 1)
            if isinstance(o, dict) and o["kind"] == kind:
                return True, tuple(o.get("stride", (1, 1)))
        return False, (1, 1)

    def path(self, name: str) -> Path | None:
        if self.out_dir is None:
            return None
        self.artifacts.append(name)
        return self.out_dir / name

    def waveform(self, name: str, w: Waveform, unit: str):
        p = self.path(name)
        if p is not None:
            emit_waveform_csv(p, w, unit)

    def grid(self, name: str, g, stride, quantity: str, unit: str):
        p = self.path(name)
        if p is not None:
            emit_grid_csv(p, g, stride, quantity, unit)


def _rel_l2(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    den = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / den) if den > 0 else float(np.linalg.norm(a))


def _cmp(name: str, value: float | None, tol: float | None) -> dict:
    ok = None if (tol is None or value is None or not math.isfinite(value)) else bool(value < tol)
    return {"name": name, "value": value, "tolerance": tol, "pass": ok}


def _refined(grid: SimGrid) -> SimGrid:
    return SimGrid(2 * grid.nz - 1, 2 * grid.nt - 1, grid.t_range, grid.store_every * 2)


def _tol(ctx: _Ctx, key: str, default: float) -> float:
    return ctx.cfg.get("tolerances", {}).get(key, default)


# ---------------------------------------------------------------------------
# GEM
# ---------------------------------------------------------------------------

def _gem_storage_grid(grid: SimGrid) -> SimGrid:
    t0, t1 = grid.t_range
    if t1 <= 0:
        return grid
    n0 = int(round(-t0 / grid.dt)) + 1
    return SimGrid(grid.nz, n0, (t0, 0.0), grid.store_every)


def _gem_store(ctx: _Ctx, phys: Physics, grid: SimGrid, a_in: Waveform) -> dict:
    p, r = phys.gem, phys.retrieval
    g = _gem_storage_grid(grid)
    run = simulate_gem(p, r, a_in, g)
    win = a_in.window(g.t_range[0], 0.0)
    n_in = win.energy()
    S0 = run.coherence.values[:, -1]
    n_coh = float(np.trapezoid(np.abs(S0) ** 2, run.coherence.z))
    metrics = {"n_in": n_in, "n_leak": run.leakage.energy(), "n_coherence": n_coh,
               "transmission": run.leakage.energy() / n_in if n_in else None,
               "storage_fraction": n_coh / n_in if n_in else None}
    conv = {"max_detuning_step": run.diagnostics["max_detuning_step"],
            "coupling_step": run.diagnostics["coupling_step"], "refined_rel_change": None}
    if ctx.profile == "strict":
        fine = simulate_gem(p, r, _input_on(ctx, phys, _refined(g)), _refined(g))
        conv["refined_rel_change"] = _rel_l2(run.leakage.samples, fine.leakage.samples[::2])
    if ctx.wants("leakage", True)[0]:
        ctx.waveform("leakage.csv", run.leakage, "T")
    _gem_grids(ctx, run.field, run.coherence)
    return {"metrics": metrics, "convergence": conv, "comparisons": [],
            "diagnostics": run.diagnostics}


def _input_on(ctx: _Ctx, phys: Physics, grid: SimGrid) -> Waveform:
    """Configured input sampled on another simulation grid."""
    return build_input(ctx.cfg, phys, grid, ctx.base_dir)


def _gem_grids(ctx: _Ctx, field: FieldGrid, coh: CoherenceGrid):
    on, stride = ctx.wants("field_grid")
    if on:
        ctx.grid("field_grid.csv", field, stride, "field", "T")
    on, stride = ctx.wants("coherence_grid")
    if on:
        ctx.grid("coherence_grid.csv", coh, stride, "coherence", "T")


def _gem_recall(ctx: _Ctx, phys: Physics, grid: SimGrid, a_in: Waveform) -> dict:
    p, r = phys.gem, phys.retrieval
    if grid.t_range[1] <= 0:
        raise ConfigError("gem-recall needs a retrieval window (t_range[1] > 0)", "grid.t_range")
    run = simulate_gem(p, r, a_in, grid)
    win = a_in.window(grid.t_range[0], 0.0)
    t_bar = ctx.cfg.get("metrics", {}).get("t_bar", 0.0)
    rep = evaluate(win, run.echo, t_bar)
    budget = energy_budget(run, a_in, p, r)
    k = int(np.argmax(np.abs(run.echo.samples)))
    metrics = rep.to_dict()
    metrics.pop("window")
    metrics.update({"n_leak": budget["n_leak"], "n_coherence_final": budget["n_coh_final"],
                    "energy_defect": budget["relative_defect"],
                    "echo_peak_time": float(run.echo.times[k]),
                    "echo_peak_abs": float(abs(run.echo.samples[k]))})
    conv = {"max_detuning_step": run.diagnostics["max_detuning_step"],
            "coupling_step": run.diagnostics["coupling_step"], "refined_rel_change": None}
    if ctx.profile == "strict":
        fg = _refined(grid)
        fine = simulate_gem(p, r, _input_on(ctx, phys, fg), fg)
        conv["refined_rel_change"] = _rel_l2(run.echo.samples, fine.echo.samples[::2])
    if ctx.wants("leakage", True)[0]:
        ctx.waveform("leakage.csv", run.leakage, "T")
    if ctx.wants("echo", True)[0]:
        ctx.waveform("echo.csv", run.echo, "T")
    _gem_grids(ctx, run.field, run.coherence)
    return {"metrics": metrics, "convergence": conv, "comparisons": [],
            "diagnostics": run.diagnostics}


def _closed_form_applicable(ctx: _Ctx, phys: Physics) -> bool:
    p = phys.gem
    return (ctx.cfg["input"]["kind"] == "expdecay"
            and math.isclose(p.omega_m, 0.5 * p.beta * p.L, rel_tol=1e-9, abs_tol=1e-12)
            and is_symmetric(p, phys.retrieval))


def _gem_compare(ctx: _Ctx, phys: Physics, grid: SimGrid, a_in: Waveform) -> dict:
    p, r = phys.gem, phys.retrieval
    tol = _tol(ctx, "l2", DEFAULT_L2)
    opts = ctx.cfg.get("compare", {})
    run = simulate_gem(p, r, a_in, grid)
    comparisons, metrics = [], {}
    i_end = -1 if grid.t_range[1] <= 0 else int(np.argmin(np.abs(run.coherence.t)))
    S_num = run.coherence.values[:, i_end]
    want_analytic = ctx.wants("analytic", True)[0]
    if _closed_form_applicable(ctx, phys):
        t_in = ctx.cfg["input"]["t_in"] * (1.0 if phys.time_unit_seconds is None
                                           else 1.0 / phys.time_unit_seconds)
        cf = closed_form_expdecay(t_in, p, r, ctx.ctl)
        so = cf.storage_output(run.leakage.times)
        v = _rel_l2(run.leakage.samples, so)
        comparisons.append(_cmp("storage_output_l2", v, tol))
        S_an = cf.coherence(run.coherence.z)
        comparisons.append(_cmp("coherence_t0_l2", _rel_l2(S_num, S_an), tol))
        if want_analytic:
            ctx.waveform("analytic_leakage.csv", Waveform(run.leakage.t0, run.leakage.dt, so), "T")
        if grid.t_range[1] > 0 and opts.get("retrieval", True):
            eo = cf.echo(run.echo.times)
            comparisons.append(_cmp("echo_l2", _rel_l2(run.echo.samples, eo), tol))
            if want_analytic:
                ctx.waveform("analytic_echo.csv", Waveform(0.0, run.echo.dt, eo), "T")
        metrics["route"] = "closed-form"
    else:
        zs = np.asarray(opts.get("z_over_L", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])) * p.L
        iz = [int(np.argmin(np.abs(run.field.z - z))) for z in zs]
        zn = run.field.z[iz]
        F_an, S_an_grid = storage_evolve(a_in, p, zn, ctl=ctx.ctl)
        i0 = int(np.argmin(np.abs(run.field.t)))
        t_sim = run.field.t[: i0 + 1]
        F_an_v = np.array([np.interp(t_sim, F_an.t, row.real) + 1j * np.interp(t_sim, F_an.t, row.imag)
                           for row in F_an.values])
        F_num = run.field.values[iz][:, : i0 + 1]
        comparisons.append(_cmp("field_slices_abs_l2", _rel_l2(np.abs(F_num), np.abs(F_an_v)), tol))
        snaps = opts.get("t_snapshots", [-5 / 6, -2 / 3, -1 / 2, -1 / 3, -1 / 6, 0.0])
        it = [int(np.argmin(np.abs(run.coherence.t - ts))) for ts in snaps]
        tn = run.coherence.t[it]
        _, S_full = storage_evolve(a_in, p, run.coherence.z, t_nodes=tn, ctl=ctx.ctl)
        S_num_snap = run.coherence.values[:, it]
        comparisons.append(_cmp("coherence_profiles_abs_l2",
                                _rel_l2(np.abs(S_num_snap), np.abs(S_full.values)), tol))
        if want_analytic:
            ctx.grid("analytic_field_slices.csv", FieldGrid(zn, t_sim, F_an_v, p.L), (1, 1), "field", "T")
            ctx.grid("numeric_field_slices.csv", FieldGrid(zn, t_sim, F_num, p.L), (1, 1), "field", "T")
            ctx.grid("analytic_coherence_profiles.csv", S_full, (1, 1), "coherence", "T")
            ctx.grid("numeric_coherence_profiles.csv",
                     CoherenceGrid(run.coherence.z, tn, S_num_snap, p.L), (1, 1), "coherence", "T")
        if grid.t_range[1] > 0 and opts.get("retrieval", True) and is_symmetric(p, r):
            ke = retrieval_echo(a_in, p, r, ctl=ctx.ctl)
            n = min(len(ke), len(run.echo))
            comparisons.append(_cmp("echo_l2", _rel_l2(run.echo.samples[1:n], ke.samples[1:n]), tol))
            if want_analytic:
                ctx.waveform("analytic_echo.csv", ke, "T")
        metrics["route"] = "convolution"
    ctx.waveform("leakage.csv", run.leakage, "T")
    if grid.t_range[1] > 0:
        ctx.waveform("echo.csv", run.echo, "T")
    _gem_grids(ctx, run.field, run.coherence)
    metrics["max_rel_l2"] = max((c["value"] for c in comparisons), default=None)
    conv = {"max_detuning_step": run.diagnostics["max_detuning_step"],
            "coupling_step": run.diagnostics["coupling_step"], "refined_rel_change": None}
    if ctx.profile == "strict":
        fg = _refined(grid)
        fine = simulate_gem(p, r, _input_on(ctx, phys, fg), fg)
        coarse = np.concatenate([run.leakage.samples, run.echo.samples[1:]])
        ref = np.concatenate([fine.leakage.samples[::2], fine.echo.samples[2::2]])
        conv["refined_rel_change"] = _rel_l2(coarse, ref)
    return {"metrics": metrics, "comparisons": comparisons, "diagnostics": run.diagnostics,
            "convergence": conv}


# ---------------------------------------------------------------------------
# GFC
# ---------------------------------------------------------------------------

def _series_dict(s: EchoSeries) -> dict:
    lk = complex(s.leakage_coeff)
    return {"leakage": [lk.real, lk.imag], "coeffs_abs": np.abs(s.echo_coeffs),
            "coeffs_re": s.echo_coeffs.real, "coeffs_im": s.echo_coeffs.imag,
            "in_domain": s.in_domain}


def _gfc_run(ctx: _Ctx, phys: Physics, grid: SimGrid, a_in: Waveform,
             analytic_default: bool = False) -> dict:
    p = phys.gfc
    run = simulate_gfc(p, a_in, grid)
    out = run.output
    oracle = propagate_via_transfer(a_in, p, t_stop=grid.t_range[1])
    inp = ctx.cfg["input"]
    t_origin = 0.0
    if "t_in" in inp:
        t_origin = inp["t_in"] * (1.0 if phys.time_unit_seconds is None else 1.0 / phys.time_unit_seconds)
    n_echo = ctx.cfg.get("metrics", {}).get("n_echoes", 5)
    n_avail = int(math.floor((grid.t_range[1] - t_origin) / p.T0 - 0.5 + 1e-9))
    n_echo = max(0, min(n_echo, n_avail))
    amp_in = float(np.max(np.abs(a_in.samples)))
    n_in = a_in.energy()
    tol_l2 = _tol(ctx, "l2", DEFAULT_L2)
    tol_pk = _tol(ctx, "peak", DEFAULT_PEAK)
    horizon = (out.times >= t_origin) & (out.times <= t_origin + 6 * p.T0)
    comparisons = [_cmp("oracle_l2", _rel_l2(out.samples[horizon], oracle.samples[horizon]), tol_l2)]
    ff = first_five_echoes(p, 5)
    th = thin_medium_echoes(p, 5, ctx.ctl)
    echoes = {"T0": p.T0, "first_five": _series_dict(ff), "thin_medium": _series_dict(th)}
    metrics = {"n_in": n_in, "eta1_formula": first_echo_efficiency(p),
               "thin_in_domain": th.in_domain}
    if n_echo >= 1:
        part = echo_partition(out, p.T0, n_echo, t_origin)
        opart = echo_partition(oracle, p.T0, n_echo, t_origin)
        echoes.update(part.to_dict())
        echoes["oracle_peaks"] = opart.peaks
        sim_c = part.peaks / amp_in
        m = min(n_echo, 5)
        scale = float(np.max(sim_c[:m])) or math.inf
        ref = np.where(sim_c[:m] > 0, sim_c[:m], np.inf)
        ff_dev = np.abs(np.abs(ff.echo_coeffs[:m]) - sim_c[:m])
        th_dev = np.abs(np.abs(th.echo_coeffs[:m]) - sim_c[:m])
        comparisons.append(_cmp("first_five_peak_err", float(np.max(ff_dev) / scale), tol_pk))
        comparisons.append(_cmp("thin_medium_peak_err", float(np.max(th_dev) / scale), tol_pk))
        comparisons.append(_cmp("thin_medium_first_echo_rel_err", float(th_dev[0] / ref[0]), None))
        metrics.update({"eta_echoes": part.energies / n_in if n_in else None,
                        "first_five_peak_rel_err": ff_dev / ref, "thin_peak_rel_err": th_dev / ref,
                        "sim_echo_coeff_abs": sim_c})
    lk = out.window(t_origin - 0.5 * p.T0, t_origin + 0.5 * p.T0).energy()
    metrics["eta_leakage"] = lk / n_in if n_in else None
    conv = {"max_detuning_step": run.diagnostics["max_detuning_step"],
            "nodes_per_segment": run.diagnostics["nodes_per_segment"], "refined_rel_change": None}
    if ctx.profile == "strict":
        fg = _refined(grid)
        fine = simulate_gfc(p, _input_on(ctx, phys, fg), fg)
        conv["refined_rel_change"] = _rel_l2(out.samples, fine.output.samples[::2])
    if ctx.wants("output", True)[0]:
        ctx.waveform("output.csv", out, "T0")
    if ctx.wants("oracle", True)[0]:
        ctx.waveform("oracle.csv", oracle, "T0")
    if ctx.wants("analytic", analytic_default)[0]:
        ctx.waveform("first_five.csv", ff.synthesize(a_in, a_in.t0, grid.t_range[1]), "T0")
        ctx.waveform("thin_medium.csv", th.synthesize(a_in, a_in.t0, grid.t_range[1]), "T0")
    on, stride = ctx.wants("field_grid")
    if on:
        ctx.grid("field_grid.csv", run.field, stride, "field", "T0")
    on, stride = ctx.wants("coherence_grid")
    if on:
        z = np.concatenate([c.z for c in run.coherences])
        v = np.concatenate([c.values for c in run.coherences])
        ctx.grid("coherence_grid.csv", CoherenceGrid(z, run.coherences[0].t, v, p.L), stride,
                 "coherence", "T0")
    return {"metrics": metrics, "comparisons": comparisons, "echoes": echoes,
            "convergence": conv, "diagnostics": run.diagnostics}


# ---------------------------------------------------------------------------
# Probe, sweep, dispatch
# ---------------------------------------------------------------------------

def _cplx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _probe_eval(fn: str, args: dict, ctl, route: str = "auto"):
    if fn == "phi2":
        res = specfun.humbert_phi2(specfun.Phi2Args(
            _cplx(args.get("alpha", 1)), _cplx(args.get("alpha_prime", 1)), _cplx(args.get("nu", 1)),
            _cplx(args.get("x", 0)), _cplx(args.get("y", 0))), ctl, route)
        return res.value, res.route
    if fn == "kummer_1f1":
        return complex(specfun.kummer_1f1(_cplx(args["a"]), _cplx(args["b"]), _cplx(args["z"]), ctl)), None
    if fn == "j1_tilde":
        return complex(specfun.j1_tilde(float(args["x"]))), None
    if fn == "bessel_j":
        return complex(specfun.bessel_j(int(args["order"]), float(args["x"]))), None
    if fn == "gem_response":
        gl, bl, t = float(args["gN2_L"]), float(args.get("beta_L", 0.0)), float(args["t"])
        if bl == 0:
            return complex(specfun.j1_tilde(gl * t)), None
        mu = gl / bl
        return complex(np.exp(-0.5j * bl * t) * specfun.kummer_1f1(1j * mu + 1, 2.0, 1j * bl * t, ctl)), None
    raise ConfigError(f"unknown probe function {fn!r}", "probe.function")


def _fmt_complex(z: complex) -> str:
    if z.imag == 0:
        return "%.17g" % z.real
    return "%.17g%+.17gj" % (z.real, z.imag)


def _specfun_probe(ctx: _Ctx) -> dict:
    pr = ctx.cfg["probe"]
    fn, args, route = pr["function"], pr.get("args", {}), pr.get("route", "auto")
    metrics = {"function": fn}
    if "scan" not in pr:
        value, used = _probe_eval(fn, args, ctx.ctl, route)
        print(_fmt_complex(value))
        metrics["value"] = [value.real, value.imag]
        if used:
            metrics["route"] = used
        return {"metrics": metrics, "comparisons": []}
    sc = pr["scan"]
    xs = np.linspace(sc["min"], sc["max"], sc["count"])
    series = sc.get("series", [{}])
    dx = (sc["max"] - sc["min"]) / (sc["count"] - 1) if sc["count"] > 1 else 1.0
    for k, extra in enumerate(series):
        a = dict(args)
        a.update(extra)
        vals = np.array([_probe_eval(fn, {**a, sc["variable"]: x}, ctx.ctl, route)[0] for x in xs])
        ctx.waveform(f"probe_{k:03d}.csv", Waveform(float(xs[0]), dx, vals), sc["variable"])
        metrics[f"series_{k:03d}_max_abs"] = float(np.max(np.abs(vals)))
    metrics["series"] = len(series)
    return {"metrics": metrics, "comparisons": []}


def _dispatch(ctx: _Ctx, mode: str) -> dict:
    if mode == "specfun-probe":
        return _specfun_probe(ctx)
    if mode == "sweep":
        return _sweep(ctx)
    try:
        phys = build_physics(ctx.cfg)
        grid = build_grid(ctx.cfg)
        a_in = build_input(ctx.cfg, phys, grid, ctx.base_dir)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "physics") from exc
    if mode in ("gem-store", "gem-recall") and phys.gem is None:
        raise ConfigError(f"mode {mode} needs a gem physics block", "physics")
    if mode == "gfc-run" and phys.gfc is None:
        raise ConfigError("mode gfc-run needs a gfc physics block", "physics")
    if mode == "gem-store":
        out = _gem_store(ctx, phys, grid, a_in)
    elif mode == "gem-recall":
        out = _gem_recall(ctx, phys, grid, a_in)
    elif mode == "gfc-run":
        out = _gfc_run(ctx, phys, grid, a_in)
    elif phys.gfc is not None:
        out = _gfc_run(ctx, phys, grid, a_in, analytic_default=True)
    else:
        out = _gem_compare(ctx, phys, grid, a_in)
    out["groups"] = phys.groups()
    out["time_unit_seconds"] = phys.time_unit_seconds
    return out


def _sweep_points(sw: dict) -> list[dict]:
    axes = sw["axes"]
    vals = [axis_values(ax) for ax in axes]
    names = [ax["param"] for ax in axes]
    combos = zip(*vals) if sw.get("combine", "product") == "zip" else itertools.product(*vals)
    return [dict(zip(names, c)) for c in combos]


def _point_config(cfg: dict, params: dict, mode: str) -> dict:
    out = {k: v for k, v in cfg.items() if k not in ("sweep", "mode")}
    out["mode"] = mode
    for k, v in params.items():
        out = set_path(out, k, v)
    return out


def _scalar_metrics(m: dict) -> dict:
    out = {}
    for k, v in m.items():
        if isinstance(v, (bool, np.bool_, str)) or v is None:
            out[k] = v
        elif isinstance(v, (int, float, np.integer, np.floating)):
            out[k] = float(v)
        elif isinstance(v, (list, tuple, np.ndarray)):
            out[k] = to_jsonable(v)
    return out


def _run_point(job) -> dict:
    """One sweep point; module level so it can cross process boundaries."""
    index, params, cfg, base_dir, out_dir, profile, evaluate_how = job
    try:
        if evaluate_how == "formula":
            phys = build_physics(cfg)
            if phys.gfc is None:
                raise ConfigError("formula sweeps need a gfc physics block", "physics")
            return {"index": index, "params": params, "status": "ok",
                    "metrics": {"eta1": first_echo_efficiency(phys.gfc),
                                "mu": phys.gfc.mu, "F_prime": phys.gfc.F_prime}}
        validate_config(cfg, base_dir)
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
        ctx = _Ctx(cfg, base_dir, out_dir, profile)
        res = _dispatch(ctx, cfg["mode"])
        metrics = _scalar_metrics(res["metrics"])
        for c in res.get("comparisons", []):
            metrics[f"cmp_{c['name']}"] = c["value"]
            metrics[f"pass_{c['name']}"] = c["pass"]
        if out_dir is not None:
            _write_report(ctx, cfg["mode"], res)
        return {"index": index, "params": params, "status": "ok", "metrics": metrics}
    except (SimulationError, specfun.SpecfunError, MetricsError, AliasingError,
            FloatingPointError) as exc:
        return {"index": index, "params": params, "status": f"solver-failure: {exc}", "metrics": {}}


def _ridge(points: list[dict], sw: dict) -> dict | None:
    names = [ax["param"] for ax in sw["axes"]]
    fp = next((n for n in names if n.endswith("gfc.F_prime")), None)
    mu = next((n for n in names if n.endswith("gfc.mu")), None)
    if fp is None or mu is None:
        return None
    rows: dict[float, list] = {}
    for pt in points:
        if "eta1" in pt["metrics"]:
            rows.setdefault(pt["params"][fp], []).append((pt["params"][mu], pt["metrics"]["eta1"]))
    mu_vals = sorted({pt["params"][mu] for pt in points})
    cell = float(np.max(np.diff(mu_vals))) if len(mu_vals) > 1 else math.inf
    devs = []
    for F_prime, entries in rows.items():
        best_mu = max(entries, key=lambda e: e[1])[0]
        target = F_prime / math.pi
        if mu_vals[0] <= target <= mu_vals[-1]:
            devs.append(abs(best_mu - target))
    return {"ridge_max_dev_mu": max(devs) if devs else None, "mu_cell": cell,
            "ridge_within_cell": bool(devs) and max(devs) <= cell}


def _sweep(ctx: _Ctx) -> dict:
    cfg = ctx.cfg
    sw = cfg["sweep"]
    how = sw.get("evaluate", "run")
    mode = sw.get("mode", "gfc-run" if "gfc" in cfg["physics"] else "gem-recall")
    pts = _sweep_points(sw)
    keep = sw.get("keep_point_artifacts", False)
    jobs = []
    for i, params in enumerate(pts):
        pcfg = _point_config(cfg, params, mode)
        pdir = ctx.out_dir / f"point_{i:03d}" if (keep and ctx.out_dir is not None) else None
        jobs.append((i, params, pcfg, ctx.base_dir, pdir, ctx.profile, how))
    workers = getattr(ctx, "jobs", 1)
    if workers > 1 and len(jobs) > 1 and how == "run":
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    results.sort(key=lambda r: r["index"])
    if keep and ctx.out_dir is not None:
        for r in results:
            d = f"point_{r['index']:03d}"
            if (ctx.out_dir / d).is_dir():
                ctx.artifacts.extend(sorted(f"{d}/{f.name}" for f in (ctx.out_dir / d).iterdir()))
    _write_sweep_csv(ctx, results, [ax["param"] for ax in sw["axes"]])
    metrics = {"points": len(results),
               "failures": sum(1 for r in results if r["status"] != "ok"),
               "comparisons_failed": sum(1 for r in results for k, v in r["metrics"].items()
                                         if k.startswith("pass_") and v is False)}
    ok = [r for r in results if r["status"] == "ok"]
    if ok and all("eta" in r["metrics"] and "fidelity" in r["metrics"] for r in ok):
        best = max(ok, key=lambda r: (r["metrics"]["eta"] or 0) * (r["metrics"]["fidelity"] or 0))
        metrics.update({"best_index": best["index"], "best_eta": best["metrics"]["eta"],
                        "best_fidelity": best["metrics"]["fidelity"]})
    if how == "formula":
        if ok:
            best = max(ok, key=lambda r: r["metrics"]["eta1"])
            metrics.update({"best_index": best["index"], "best_eta1": best["metrics"]["eta1"]})
        ridge = _ridge(results, sw)
        if ridge:
            metrics.update(ridge)
    if metrics["failures"]:
        raise _SweepFailure(metrics, results)
    try:
        groups = build_physics(cfg).groups()
    except (ValueError, KeyError):
        groups = {}
    return {"metrics": metrics, "comparisons": [], "points": results, "groups": groups}


class _SweepFailure(RuntimeError):
    def __init__(self, metrics, results):
        super().__init__(f"{metrics['failures']} sweep point(s) failed")
        self.metrics = metrics
        self.results = results


def _write_sweep_csv(ctx: _Ctx, results: list[dict], names: list[str]):
    p = ctx.path("sweep.csv")
    if p is None:
        return
    keys: list[str] = []
    for r in results:
        for k, v in r["metrics"].items():
            if k not in keys and not isinstance(v, list):
                keys.append(k)
    lines = ["# gemfc sweep v1", ",".join(["index"] + names + keys + ["status"])]
    for r in results:
        row = [str(r["index"])]
        row += [_cell(r["params"][n]) for n in names]
        row += [_cell(r["metrics"].get(k)) for k in keys]
        row.append(r["status"].split(":")[0])
        lines.append(",".join(row))
    p.write_text("\n".join(lines) + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return "%.17g" % v
    return str(v)


def _write_report(ctx: _Ctx, mode: str, res: dict, status: str = "ok") -> dict:
    report = {
        "schema_version": SCHEMA_VERSION,
        "mode": mode,
        "status": status,
        "groups": res.get("groups", {}),
        "metrics": res.get("metrics", {}),
        "comparisons": res.get("comparisons", []),
        "convergence": res.get("convergence", {}),
        "diagnostics": res.get("diagnostics", {}),
        "artifacts": [],
    }
    if "echoes" in res:
        report["echoes"] = res["echoes"]
    if "points" in res:
        report["points"] = res["points"]
    if ctx.out_dir is not None:
        report["artifacts"] = sorted(set(ctx.artifacts + ["report.json", "manifest.json"]))
        emit_report_json(ctx.out_dir / "report.json", report)
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "config_hash": config_hash(ctx.cfg),
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "package_version": _version(),
            "mode": mode,
            "tolerance_profile": ctx.profile,
            "time_unit_seconds": res.get("time_unit_seconds"),
            "groups": report["groups"],
            "convergence": report["convergence"],
            "metrics": report["metrics"],
            "artifacts": report["artifacts"],
        }
        emit_manifest_json(ctx.out_dir / "manifest.json", manifest)
    return report


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def run(cfg: dict, out_dir=None, *, base_dir=None, jobs: int = 1,
        profile: str = "fast") -> tuple[int, dict]:
    """Validate and execute one configuration; returns (exit status, report)."""
    base_dir = Path(base_dir) if base_dir is not None else None
    out_dir = Path(out_dir) if out_dir is not None else None
    if profile not in PROFILES:
        raise ConfigError(f"unknown tolerance profile {profile!r}", "--tolerance-profile")
    validate_config(cfg, base_dir)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    ctx = _Ctx(cfg, base_dir, out_dir, profile)
    ctx.jobs = max(1, int(jobs))
    mode = cfg["mode"]
    try:
        res = _dispatch(ctx, mode)
    except _SweepFailure as exc:
        res = {"metrics": exc.metrics, "comparisons": [], "points": exc.results,
               "diagnostics": {"error": str(exc)}}
        return EXIT_SOLVER, _write_report(ctx, mode, res, "solver-failure")
    except (SimulationError, specfun.SpecfunError, MetricsError, AliasingError,
            FloatingPointError) as exc:
        res = {"metrics": {}, "comparisons": [],
               "diagnostics": {"error": f"{type(exc).__name__}: {exc}"}}
        return EXIT_SOLVER, _write_report(ctx, mode, res, "solver-failure")
    return EXIT_OK, _write_report(ctx, mode, res)


def _summary(report: dict) -> str:
    lines = [f"mode {report['mode']}: {report['status']}"]
    for c in report["comparisons"]:
        flag = {True: "PASS", False: "FAIL", None: "info"}[c["pass"]]
        val = "n/a" if c["value"] is None else f"{c['value']:.4g}"
        tol = "" if c["tolerance"] is None else f" (tol {c['tolerance']:g})"
        lines.append(f"  [{flag}] {c['name']} = {val}{tol}")
    for pt in report.get("points", []):
        checks = [(k[5:], v) for k, v in sorted(pt["metrics"].items())
                  if k.startswith("pass_") and v is not None]
        if checks:
            params = ", ".join(f"{k.rsplit('.', 1)[-1]}={_short(v)}" for k, v in pt["params"].items())
            flags = " ".join(f"{n}:{'PASS' if v else 'FAIL'}" for n, v in checks)
            lines.append(f"  point {pt['index']} ({params}) {flags}")
    for k in ("eta", "fidelity", "amp_preservation", "best_eta", "best_fidelity", "best_eta1",
              "ridge_max_dev_mu"):
        v = report["metrics"].get(k)
        if isinstance(v, (int, float)):
            lines.append(f"  {k} = {v:.6g}")
    return "\n".join(lines)


def _short(v) -> str:
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gemfc", description=__doc__.split("\n")[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="JSON run configuration")
    src.add_argument("--preset", help="shipped configuration, e.g. fig7")
    src.add_argument("--list-presets", action="store_true", help="list shipped presets and exit")
    ap.add_argument("--out-dir", type=Path, default=Path("gemfc-out"), help="artifact directory")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--tolerance-profile", choices=sorted(PROFILES), default="fast",
                    help="fast: single grid; strict: tighter special-function tolerance "
                         "plus a refined-grid convergence check")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list_presets:
        print("\n".join(list_presets()))
        return EXIT_OK
    try:
        if args.jobs < 1:
            raise ConfigError("must be >= 1", "--jobs")
        if args.preset:
            cfg, base = load_preset(args.preset), None
        elif args.config:
            cfg, base = load_config(args.config)
        else:
            raise ConfigError("one of --config, --preset or --list-presets is required")
        status, report = run(cfg, args.out_dir, base_dir=base, jobs=args.jobs,
                             profile=args.tolerance_profile)
    except (ConfigError, jsonschema.ValidationError) as exc:
        print(f"gemfc: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(_summary(report))
    if status == EXIT_SOLVER:
        print(f"gemfc: solver failure: {report['diagnostics'].get('error')}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
