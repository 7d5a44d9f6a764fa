"""Experiment runners behind the command-line subcommands.

Each runner takes a validated :class:`RunConfig` and returns an
:class:`Outcome`: the primary file content, an optional JSON run record
written next to CSV output, summary lines for the terminal, and an exit
code. Runners never write files themselves.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .background import C_LIGHT, SpectrumParams, residual_summary, sample_background
from .bell import (
    CorrelationModel,
    MeasurementSettings,
    PhaseDistribution,
    bell_observable,
    bound_check,
    correlation_analytic,
    maximize_bell,
)
from .config import RunConfig
from .deviation import (
    DeviationState,
    StochasticForcing,
    TidalSignal,
    accumulate_phase,
    analytic_oscillator,
    integrate_deviation,
)
from .errors import ConfigError, SampleSizeError
from .geometry import self_check
from .interference import (
    PathPhaseModel,
    SlitGeometry,
    gaussian_visibility,
    gaussian_visibility_stderr,
    two_slit_intensity,
    visibility,
)
from .io import json_text, load_ensemble, phase_csv, profile_csv, trajectory_csv

SQRT2 = math.sqrt(2.0)


@dataclass
class RunRecord:
    config: dict
    result: dict
    warnings: list[str] = field(default_factory=list)
    version: str = __version__

    def to_dict(self) -> dict:
        return {"config": self.config, "version": self.version, "result": self.result, "warnings": self.warnings}


@dataclass
class Outcome:
    primary: str
    record: RunRecord | None = None
    extra_files: dict[str, str] = field(default_factory=dict)
    summary: list[str] = field(default_factory=list)
    exit_code: int = 0


def _ensemble_from(path: str):
    try:
        return load_ensemble(path)
    except OSError as exc:
        raise ConfigError(f"cannot read ensemble {path}: {exc.strerror}") from exc


def _record_or_primary(cfg: RunConfig, record: RunRecord, csv_body: str, **kw) -> Outcome:
    if cfg.format == "csv":
        return Outcome(csv_body, record, **kw)
    return Outcome(json_text(record.to_dict()), None, **kw)


# background ---------------------------------------------------------------


def validate_background(cfg: RunConfig) -> SpectrumParams:
    if cfg.format != "json":
        raise ConfigError("background writes JSON only")
    if cfg["n_modes"] < 1:
        raise ConfigError(f"n_modes must be >= 1, got {cfg['n_modes']}")
    spectrum = SpectrumParams(cfg["f_min_hz"], cfg["f_max_hz"], cfg["exponent"], cfg["rms"], cfg["h_max"])
    spectrum.validate()
    return spectrum


def run_background(cfg: RunConfig) -> Outcome:
    spectrum = validate_background(cfg)
    ens = sample_background(cfg["n_modes"], cfg.seed, spectrum)
    summary = residual_summary(ens)
    doc = ens.to_dict()
    doc["config"] = cfg.echo()
    doc["version"] = __version__
    doc["residuals"] = summary
    lines = [
        f"modes={summary['n_modes']} max_gauge_residual={summary['max_gauge_residual']:.3e} "
        f"max_field_equation_residual={summary['max_field_equation_residual']:.3e}"
    ]
    return Outcome(json_text(doc), summary=lines)


# deviate ------------------------------------------------------------------


def _deviate_setup(cfg: RunConfig):
    r_const, ens_path = cfg["r_const"], cfg["ensemble"]
    if (r_const is None) == (ens_path is None):
        raise ConfigError("deviate needs exactly one of r_const or ensemble")
    if cfg["f_sigma"] < 0:
        raise ConfigError("f_sigma must be non-negative")
    if cfg["steps_per_period"] < 1 or cfg["periods"] <= 0:
        raise ConfigError("steps_per_period and periods must be positive")
    if r_const is not None:
        tidal = TidalSignal.constant(r_const)
        period = 2.0 * math.pi / (C_LIGHT * math.sqrt(r_const)) if r_const > 0 else 1.0
    else:
        ens = _ensemble_from(ens_path)
        tidal = TidalSignal.from_background(ens, (cfg["x_m"], cfg["y_m"], cfg["z_m"]))
        period = 1.0 / ens.spectrum.f_max
    dt = cfg["dt"] if cfg["dt"] is not None else period / cfg["steps_per_period"]
    steps = cfg["steps"] if cfg["steps"] is not None else int(math.ceil(cfg["periods"] * period / dt - 1e-9))
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    return tidal, dt, steps


def run_deviate(cfg: RunConfig) -> Outcome:
    tidal, dt, steps = _deviate_setup(cfg)
    forcing = StochasticForcing.draw(cfg["f_sigma"], cfg.seed)
    initial = DeviationState(cfg["ell0"], cfg["ell_rate0"], 0.0)
    traj = integrate_deviation(tidal, forcing, initial, dt, steps)
    result = {
        "dt": dt,
        "steps": steps,
        "tidal": tidal.description,
        "forcing_value": forcing.value_per_realization,
        "final_state": {"tau": float(traj.tau[-1]), "ell": float(traj.ell[-1]), "ell_rate": float(traj.ell_rate[-1])},
    }
    lines = [f"steps={steps} dt={dt:.6e} final_ell={traj.ell[-1]:.12g}"]
    r0 = cfg["r_const"]
    if r0 is not None and forcing.value_per_realization == 0.0:
        if r0 > 0:
            energy = traj.energy(r0)
            drift = float(np.max(np.abs(energy - energy[0])) / energy[0]) if energy[0] > 0 else 0.0
            result["energy_drift"] = drift
            lines.append(f"energy_drift={drift:.3e}")
            if cfg["ell_rate0"] == 0.0 and cfg["ell0"] != 0.0:
                err = float(np.max(np.abs(traj.ell - analytic_oscillator(r0, cfg["ell0"], traj.tau))) / abs(cfg["ell0"]))
                result["max_relative_error"] = err
                lines.append(f"max_relative_error={err:.3e}")
        elif r0 == 0.0:
            result["ell_constant"] = bool(np.all(traj.ell == traj.ell[0]))
    extra = {}
    if cfg["phase_output"]:
        trace = accumulate_phase(tidal, traj.tau, cfg["phase_mode"])
        result["final_phase"] = float(trace.phi[-1])
        result["clipped_fraction"] = trace.clipped_fraction
        extra[cfg["phase_output"]] = phase_csv(trace)
    if cfg.format == "json":
        result["trajectory"] = {"tau": traj.tau.tolist(), "ell": traj.ell.tolist(), "ell_rate": traj.ell_rate.tolist()}
    record = RunRecord(cfg.echo(), result)
    return _record_or_primary(cfg, record, trajectory_csv(traj), extra_files=extra, summary=lines)


# twoslit ------------------------------------------------------------------


def _twoslit_setup(cfg: RunConfig):
    geometry = SlitGeometry(
        cfg["slit_separation"], cfg["screen_distance"], cfg["wavelength"], cfg["screen_points"], cfg["screen_half_width"]
    )
    dist = cfg["distribution"]
    ens = None
    if dist == "background":
        if cfg["ensemble"] is None:
            raise ConfigError("distribution=background needs ensemble=<path>")
        ens = _ensemble_from(cfg["ensemble"])
        if not cfg["window"] > 0:
            raise ConfigError("window must be positive")
    model = PathPhaseModel(cfg["sigma"], dist, cfg["half_width"], ens, cfg["window"])
    if cfg["n_realizations"] < 1:
        raise ConfigError("n_realizations must be >= 1")
    if geometry.screen_half_width < geometry.fringe_period:
        raise ConfigError("screen does not cover two fringe periods")
    return geometry, model


def run_twoslit(cfg: RunConfig) -> Outcome:
    geometry, model = _twoslit_setup(cfg)
    profile = two_slit_intensity(geometry, model, cfg["n_realizations"], cfg.seed, cfg.workers)
    vis = visibility(profile, geometry.fringe_period)
    result = {
        "geometry": geometry.to_dict(),
        "phase_model": model.to_dict(),
        "n_realizations": profile.n_realizations,
        "seed": cfg.seed,
        "visibility": vis,
        "mean_cos": profile.mean_cos,
    }
    if model.distribution == "gaussian":
        result["expected_visibility"] = gaussian_visibility(model.sigma_rel)
        result["expected_std_error"] = gaussian_visibility_stderr(model.sigma_rel, profile.n_realizations)
    if cfg.format == "json":
        result["profile"] = {"x_m": profile.positions.tolist(), "intensity": profile.intensity.tolist()}
    record = RunRecord(cfg.echo(), result)
    return _record_or_primary(cfg, record, profile_csv(profile), summary=[f"visibility={vis:.9f}"])


# bell ---------------------------------------------------------------------


def _bell_setup(cfg: RunConfig):
    if cfg["method"] == "montecarlo" and cfg["n"] < 100:
        raise SampleSizeError(f"montecarlo needs n >= 100, got {cfg['n']}")
    if cfg["rho"] < 0:
        raise ConfigError("rho must be non-negative")
    model = CorrelationModel(cfg["model"], PhaseDistribution("constant", cfg["rho"]))
    settings = MeasurementSettings(cfg["a"], cfg["a_prime"], cfg["b"], cfg["b_prime"])
    return model, settings


def run_bell(cfg: RunConfig) -> Outcome:
    if cfg.format != "json":
        raise ConfigError("bell writes JSON only")
    model, settings = _bell_setup(cfg)
    res = bell_observable(settings, model, cfg["method"], cfg["n"] if cfg["method"] == "montecarlo" else 0, cfg.seed, cfg.workers)
    doc = res.to_dict()
    doc["config"] = cfg.echo()
    doc["version"] = __version__
    verdict = "PASS" if res.passed else "FAIL"
    line = f"s_value={res.s_value:.6f} std_error={res.std_error:.3e} bound={res.bound:.6f} {verdict}"
    return Outcome(json_text(doc), summary=[line], exit_code=0 if res.passed else 1)


# geometry -----------------------------------------------------------------


def run_geometry(cfg: RunConfig) -> Outcome:
    if cfg.format != "json":
        raise ConfigError("geometry writes JSON only")
    if cfg["n_pairs"] < 1 or cfg["dim"] < 1:
        raise ConfigError("n_pairs and dim must be >= 1")
    result = self_check(cfg.seed, cfg["n_pairs"], cfg["dim"])
    record = RunRecord(cfg.echo(), result)
    verdict = "PASS" if result["pass"] else "FAIL"
    line = f"max_reconstruction_rel_error={result['max_reconstruction_rel_error']:.3e} {verdict}"
    return Outcome(json_text(record.to_dict()), summary=[line], exit_code=0 if result["pass"] else 1)


# report -------------------------------------------------------------------


def oscillator_convergence(r0: float = 1.0 / C_LIGHT**2, periods: int = 10, steps_per_period: int = 200) -> dict:
    """RK4 error, convergence order and energy drift on the constant-tidal oscillator."""
    omega = C_LIGHT * math.sqrt(r0)
    period = 2.0 * math.pi / omega
    errors = []
    drift = None
    for k, spp in enumerate((steps_per_period, 2 * steps_per_period)):
        dt = period / spp
        traj = integrate_deviation(TidalSignal.constant(r0), StochasticForcing(), DeviationState(1.0, 0.0), dt, periods * spp)
        errors.append(float(np.max(np.abs(traj.ell - analytic_oscillator(r0, 1.0, traj.tau)))))
        if k == 0:
            energy = traj.energy(r0)
            drift = float(np.max(np.abs(energy - energy[0])) / energy[0])
    ratio = errors[0] / errors[1]
    return {
        "max_relative_error": errors[0],
        "max_relative_error_half_dt": errors[1],
        "error_ratio": ratio,
        "order": math.log2(ratio),
        "energy_drift": drift,
    }


def _row(check: str, value: str, target: str, ok: bool) -> dict:
    return {"check": check, "value": value, "target": target, "pass": bool(ok)}


def validate_report(cfg: RunConfig) -> None:
    if cfg["n_realizations"] < 2:
        raise ConfigError("n_realizations must be >= 2")
    if cfg["mc_samples"] < 100:
        raise SampleSizeError("mc_samples must be >= 100")
    if cfg["bound_settings"] < 1000:
        raise SampleSizeError("bound_settings must be >= 1000")


def report_rows(cfg: RunConfig) -> list[dict]:
    rows = []
    standard = MeasurementSettings()
    cos_model = CorrelationModel("cosine-projection")
    sign_model = CorrelationModel("deterministic-sign")

    r = bell_observable(standard, cos_model)
    rows.append(_row("Bell S, cosine-projection, standard settings (analytic)", f"{r.s_value:.9f}", "sqrt(2) +- 1e-9", abs(r.s_value - SQRT2) <= 1e-9))
    r = bell_observable(standard, sign_model)
    rows.append(_row("Bell S, deterministic-sign, standard settings (analytic)", f"{r.s_value:.9f}", "1 +- 1e-9", abs(r.s_value - 1.0) <= 1e-9))
    r = bell_observable(standard, cos_model, "montecarlo", cfg["mc_samples"], cfg.seed, cfg.workers)
    rows.append(
        _row(
            "Bell S, cosine-projection, standard settings (Monte Carlo)",
            f"{r.s_value:.6f} +- {r.std_error:.1e}",
            "sqrt(2) within 3 s.e.",
            abs(r.s_value - SQRT2) <= 3.0 * r.std_error,
        )
    )
    for name, model, target in (("cosine-projection", cos_model, SQRT2), ("deterministic-sign", sign_model, 1.0)):
        _, best = maximize_bell(model)
        rows.append(_row(f"max S, {name}", f"{best:.9f}", f"{target:.9f} +- 1e-6", abs(best - target) <= 1e-6))
    for name, model in (("cosine-projection", cos_model), ("deterministic-sign", sign_model)):
        rep = bound_check(model, cfg["bound_settings"], cfg.seed)
        rows.append(_row(f"bound over {rep.n_settings} random settings, {name}", f"{rep.max_s:.9f}", f"<= {rep.bound:.9f} + 1e-9", rep.passed))
    for label, theta in (("0", 0.0), ("pi/4", math.pi / 4), ("pi/2", math.pi / 2), ("3pi/4", 3 * math.pi / 4), ("pi", math.pi)):
        m = correlation_analytic(theta)
        rows.append(_row(f"M(theta={label}), rho=2", f"{m:+.9f}", f"cos(theta) = {math.cos(theta):+.9f}", abs(m - math.cos(theta)) <= 1e-10))
    geometry = SlitGeometry()
    for sigma in (0.0, 0.5, 1.0, 1.5, 2.0):
        prof = two_slit_intensity(geometry, PathPhaseModel(sigma), cfg["n_realizations"], cfg.seed, cfg.workers)
        vis = visibility(prof, geometry.fringe_period)
        expect = gaussian_visibility(sigma)
        if sigma == 0.0:
            ok, tol = abs(vis - 1.0) <= 1e-9, "1 +- 1e-9"
        else:
            se = gaussian_visibility_stderr(sigma, prof.n_realizations)
            ok, tol = abs(vis - expect) <= 3.0 * se, f"{expect:.6f} within 3 s.e. ({se:.1e})"
        rows.append(_row(f"visibility, gaussian sigma={sigma}", f"{vis:.6f}", tol, ok))
    osc = oscillator_convergence()
    rows.append(
        _row(
            "RK4 oscillator convergence order (dt = period/200 vs /400)",
            f"{osc['order']:.3f} (max err {osc['max_relative_error']:.2e})",
            "4.0 +- 0.3",
            abs(osc["order"] - 4.0) <= 0.3,
        )
    )
    rows.append(_row("RK4 oscillator energy drift, 10 periods", f"{osc['energy_drift']:.2e}", "< 1e-6", osc["energy_drift"] < 1e-6))
    return rows


def markdown_table(rows: list[dict], seed: int) -> str:
    lines = [
        "# stochgrav report",
        "",
        f"seed: {seed}",
        "",
        "| check | value | target | status |",
        "|---|---|---|---|",
    ]
    for r in rows:
        lines.append(f"| {r['check']} | {r['value']} | {r['target']} | {'pass' if r['pass'] else 'FAIL'} |")
    n_fail = sum(not r["pass"] for r in rows)
    lines += ["", f"{len(rows) - n_fail}/{len(rows)} checks passed", ""]
    return "\n".join(lines)


def run_report(cfg: RunConfig) -> Outcome:
    validate_report(cfg)
    try:
        rows = report_rows(cfg)
    except Exception as exc:  # a failing sub-run marks the report failed, it does not crash it
        rows = [_row("report sub-run", f"{type(exc).__name__}: {exc}", "completes", False)]
    ok = all(r["pass"] for r in rows)
    if cfg.format == "json":
        body = json_text(RunRecord(cfg.echo(), {"rows": rows, "pass": ok}).to_dict())
    elif cfg.format == "csv":
        body = csv_text_rows(rows)
    else:
        body = markdown_table(rows, cfg.seed)
    summary = [f"{sum(r['pass'] for r in rows)}/{len(rows)} checks passed"]
    return Outcome(body, summary=summary, exit_code=0 if ok else 1)


def csv_text_rows(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "value", "target", "pass"])
    for r in rows:
        w.writerow([r["check"], r["value"], r["target"], "true" if r["pass"] else "false"])
    return buf.getvalue()


RUNNERS = {
    "background": run_background,
    "deviate": run_deviate,
    "twoslit": run_twoslit,
    "bell": run_bell,
    "geometry": run_geometry,
    "report": run_report,
}

VALIDATORS = {
    "background": validate_background,
    "deviate": _deviate_setup,
    "twoslit": _twoslit_setup,
    "bell": _bell_setup,
    "geometry": lambda cfg: None,
    "report": validate_report,
}


def sidecar_path(output: Path) -> Path:
    return output.with_suffix(".run.json")
