"""Scenario execution: build measures, dispatch dynamics, fit rates, evaluate checks.

Summary JSON schema (``schema_version`` 1)::

    name, description, seed, config_sha256, dynamics, solver
    theory      rate constants, second-moment constants, best-response bound
    fitted_rate decay rate of diagnostics.rate_channel (null if none)
    fit         {channel, rate, intercept, r_squared, window, n_points} or null
    metrics     flat map of scalar results (null where not applicable)
    choices     settings chosen where the model leaves them open
    checks      [{metric, value, bound, kind, passed}]
    passed      all checks passed
    wall_clock  seconds (excluded from determinism comparisons)
"""

from __future__ import annotations

import json
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from scipy.stats import norm

from ..energy import (
    EnergySpec,
    Mode,
    best_response_bound,
    dissipation,
    eval_energy,
    rate_constants,
    second_moment_constant,
)
from ..errors import ConfigError, InvalidSeriesError, UnsupportedRepresentationError
from ..fv_solver import (
    FvState,
    coupled_steady_state,
    fv_simulate,
    gibbs_steady_state,
    max_stable_dt,
)
from ..measures import DiracState, GridDensity, ParticleEnsemble, moment2, nodes, sample_gaussian
from ..ot_metrics import fit_rate, w2, wbar
from ..particle_sim import SimState, StepConfig, check_stability, simulate
from ..timescale import (
    fast_algorithm_flow,
    fast_population_flow,
    fast_rho_fixed_point,
    fast_x_fixed_point,
    reduced_energy,
)
from ..trajectory import Trajectory
from .baseline import BaselineConfig, classifier_loss, mean_shift_baseline
from .config import InitConfig, MeasureInit, ScenarioConfig
from .metrics import classifier_metrics, predict_label0

SCHEMA_VERSION = 1


@dataclass
class RunResult:
    summary: dict
    trajectory: Trajectory
    alt: Optional[Trajectory] = None
    files: List[Path] = field(default_factory=list)
    reference: dict = field(default_factory=dict)


# Measures -----------------------------------------------------------------


def _grid_gaussian(m: MeasureInit, grid):
    lo, hi, n = grid
    if m.kind == "uniform":
        return GridDensity.uniform(lo, hi, n)
    if m.kind != "gaussian":
        raise ConfigError(f"init kind {m.kind!r} cannot be placed on a grid")
    mean, sd = m.mean[0], math.sqrt(m.var[0])
    return GridDensity.from_cdf(lambda z: norm.cdf(z, mean, sd), lo, hi, n)


def build_initial(cfg: ScenarioConfig, spec: EnergySpec, init: InitConfig):
    s = cfg.solver
    mr, mm = init.rho, init.mu
    if s.kind == "fv":
        rho = _grid_gaussian(mr, s.rho_grid)
        if mm.kind == "dirac":
            mu = DiracState(mm.point)
        elif s.mu_grid is None:
            raise ConfigError("solver.mu_cells: a density mu on the fv solver needs a mu grid")
        else:
            mu = _grid_gaussian(mm, s.mu_grid)
        return rho, mu
    if mr.kind != "gaussian":
        raise ConfigError("init.rho.kind: particles need a gaussian init")
    rho = sample_gaussian(mr.mean, mr.var, s.n_rho, seed=cfg.seed + mr.seed_offset)
    if mm.kind == "dirac":
        mu = DiracState(mm.point)
    else:
        if s.n_mu is None:
            raise ConfigError("solver.n_mu: a particle mu needs n_mu")
        mu = sample_gaussian(mm.mean, mm.var, s.n_mu, seed=cfg.seed + 1 + mm.seed_offset)
    return rho, mu


# Validation ---------------------------------------------------------------


def validate(cfg: ScenarioConfig) -> EnergySpec:
    """Pre-run checks; errors name the offending key."""
    spec = cfg.energy()
    d = cfg.dynamics.kind
    t = cfg.time
    if not (t.dt > 0 and t.t_end > 0):
        raise ConfigError("time: dt and t_end must be positive")
    n = t.t_end / t.dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError("time.dt: t_end must be a whole number of steps")
    if cfg.solver.kind == "particles":
        try:
            check_stability(spec, StepConfig(t.dt, mu_every=cfg.solver.mu_every, mu_dt=cfg.solver.mu_dt))
        except Exception as exc:
            raise ConfigError(f"time.dt: {exc}") from exc
    if d in ("fast_x", "fast_rho", "mean_shift_baseline") and spec.extras is None:
        raise ConfigError(f"energy.extras: dynamics {d!r} needs kappa and x0")
    if d in ("fast_x", "fast_rho") and spec.mode is not Mode.COMPETITIVE:
        raise ConfigError(f"energy.mode: dynamics {d!r} is defined for the competitive game")
    if d == "fast_rho" and not spec.alpha > 0:
        raise ConfigError("energy.alpha: fast_rho needs alpha > 0")
    if d in ("fast_rho", "mean_shift_baseline") and cfg.solver.kind != "fv":
        raise ConfigError(f"solver.kind: dynamics {d!r} runs on the fv solver")
    if d in ("fast_x", "fast_rho", "fixed_x", "mean_shift_baseline") and cfg.init.mu.kind != "dirac":
        raise ConfigError(f"init.mu.kind: dynamics {d!r} needs a dirac classifier")
    if cfg.solver.kind == "fv" and d in ("coupled", "fixed_x", "fast_x", "mean_shift_baseline"):
        rho, mu = build_initial(cfg, spec, cfg.init)
        if d == "fixed_x" and cfg.dynamics.x_value is not None:
            mu = DiracState(cfg.dynamics.x_value)
        freeze_mu = d != "coupled"
        lim = max_stable_dt(spec, FvState(rho, mu), freeze_mu=freeze_mu)
        if t.dt > lim:
            raise ConfigError(f"time.dt: {t.dt} exceeds the initial positivity bound {lim:.6g}")
    if cfg.reference.kind == "coupled_gibbs" and cfg.solver.mu_grid is None:
        raise ConfigError("reference.kind: coupled_gibbs needs an fv mu grid")
    return spec


# Reference states ---------------------------------------------------------


def compute_reference(cfg: ScenarioConfig, spec: EnergySpec, rho0, mu0) -> dict:
    kind = cfg.reference.kind
    if kind == "none":
        return {}
    s = cfg.solver
    if kind == "gibbs":
        if s.kind != "fv":
            raise ConfigError("reference.kind: gibbs reference needs the fv solver")
        res = gibbs_steady_state(spec, "rho", mu0, s.rho_grid)
        return {"rho": res.density, "mu": mu0}
    if kind == "coupled_gibbs":
        r, m, _ = coupled_steady_state(spec, s.rho_grid, s.mu_grid, tol=1e-12, max_iter=100_000)
        return {"rho": r, "mu": m}
    if kind == "fast_x_fixed_point":
        r, b = fast_x_fixed_point(spec, s.rho_grid)
        return {"rho": r, "mu": DiracState(b)}
    if kind == "fast_rho_fixed_point":
        x = fast_rho_fixed_point(spec, s.rho_grid, x_init=mu0.point)
        gd, r = reduced_energy(spec, x, s.rho_grid)
        return {"rho": r, "mu": DiracState(x), "x": x, "G_d": gd}
    raise ConfigError(f"reference.kind: unknown {kind!r}")


# Observers ----------------------------------------------------------------


def _finite(v):
    return v is not None and np.isfinite(v)


def make_observer(cfg: ScenarioConfig, spec: EnergySpec, ref: dict):
    ref_rho, ref_mu = ref.get("rho"), ref.get("mu")
    ref_energy = None
    if ref_rho is not None and ref_mu is not None:
        try:
            ref_energy = eval_energy(spec, ref_rho, ref_mu)
        except UnsupportedRepresentationError:
            ref_energy = None
    record_x = cfg.dynamics.kind in ("coupled", "fixed_x")

    def obs(t, rho, mu):
        out = {"moment2_rho": moment2(rho), "moment2_mu": moment2(mu)}
        out["moment2"] = out["moment2_rho"] + out["moment2_mu"]
        try:
            out["energy"] = eval_energy(spec, rho, mu)
            out["dissipation"] = dissipation(spec, rho, mu)
        except UnsupportedRepresentationError:
            pass
        if isinstance(mu, DiracState):
            if record_x:
                for i, xi in enumerate(mu.point):
                    out[f"x_{i}"] = float(xi)
            if spec.extras is not None:
                out["classifier_loss"] = classifier_loss(spec, rho, mu.point)
        if ref_rho is not None and spec.dim_rho == 1:
            out["w2_ref_rho"] = w2(rho, ref_rho)
            if ref_mu is not None and spec.dim_mu == 1:
                out["w2_ref_mu"] = w2(mu, ref_mu)
                out["wbar_ref"] = float(np.hypot(out["w2_ref_rho"], out["w2_ref_mu"]))
        if ref_energy is not None and "energy" in out:
            # the population ascends in competitive mode, so the gap is taken unsigned
            out["energy_gap"] = abs(out["energy"] - ref_energy)
        return out

    return obs


# Dynamics -----------------------------------------------------------------


def run_dynamics(cfg: ScenarioConfig, spec: EnergySpec, rho0, mu0, observers, ref: dict) -> Trajectory:
    d = cfg.dynamics
    t = cfg.time
    s = cfg.solver
    if d.kind in ("coupled", "fixed_x"):
        freeze_mu = d.kind == "fixed_x"
        if freeze_mu and d.x_value is not None:
            mu0 = DiracState(d.x_value)
        if s.kind == "fv":
            return fv_simulate(spec, FvState(rho0, mu0), t.t_end, t.dt, observers, t.snapshot_every,
                               freeze_mu=freeze_mu)
        st = SimState.initial(rho0, mu0, seed=cfg.seed + 7)
        step_cfg = StepConfig(t.dt, freeze_mu=freeze_mu, mu_every=s.mu_every, mu_dt=s.mu_dt)
        return simulate(spec, st, step_cfg, t.t_end, observers, t.snapshot_every)
    if d.kind == "fast_x":
        return fast_algorithm_flow(spec, rho0, t.t_end, t.dt, solver=s.kind, observers=observers,
                                   snapshot_every=t.snapshot_every, seed=cfg.seed + 7)
    if d.kind == "fast_rho":
        return fast_population_flow(spec, mu0.point, t.t_end, t.dt, s.rho_grid, observers,
                                    t.snapshot_every, x_ref=ref.get("x"))
    if d.kind == "mean_shift_baseline":
        bc = BaselineConfig(d.rounds, d.perturb_scale, d.inner_steps, seed=cfg.seed, x_bounds=d.x_bounds)
        return mean_shift_baseline(spec, rho0, bc, t.t_end, t.dt, float(mu0.point[0]), observers,
                                   t.snapshot_every)
    raise ConfigError(f"dynamics.kind: unknown {d.kind!r}")


# Post-processing ----------------------------------------------------------


def _series(traj, name):
    t, v = traj.series(name)
    return t, v


def _ratio_max(num, den):
    ok = den > 0
    if not np.any(ok):
        return None
    return float(np.max(num[ok] / den[ok]))


def derived_metrics(cfg, spec, traj: Trajectory, alt: Optional[Trajectory], ref: dict, theory: dict) -> dict:
    m: Dict[str, Optional[float]] = {}
    first, last = traj.snapshots[0], traj.final
    m["final_time"] = last.time
    m["final_moment2"] = float(moment2(last.rho) + moment2(last.mu))
    for ch in ("energy", "classifier_loss", "dissipation"):
        _, v = _series(traj, ch)
        m[f"final_{ch}"] = float(v[-1]) if v.size else None
    _, loss = _series(traj, "classifier_loss")
    m["loss_min"] = float(loss.min()) if loss.size else None
    m["loss_max"] = float(loss.max()) if loss.size else None
    if isinstance(last.mu, DiracState):
        for i, xi in enumerate(last.mu.point):
            m[f"x_final_{i}"] = float(xi)
    # displacement from the initial state, exact per coordinate
    disp = 0.0
    for snap in traj.snapshots:
        for a, b in ((snap.rho, first.rho), (snap.mu, first.mu)):
            pa, wa = nodes(a)
            pb, wb = nodes(b)
            if pa.shape == pb.shape:
                disp = max(disp, float(np.max(np.abs(pa - pb), initial=0.0)),
                           float(np.max(np.abs(wa - wb), initial=0.0)))
            else:
                disp = max(disp, float("inf"))
    m["max_displacement"] = disp
    # joint contraction between the two initial pairs
    if alt is not None:
        n = min(len(traj.snapshots), len(alt.snapshots))
        for a, b in zip(traj.snapshots[:n], alt.snapshots[:n]):
            traj.record("wbar_alt", a.time, wbar((a.rho, b.rho), (a.mu, b.mu)))
    # dissipation bound D(t) ≤ e^{−2λ_c t} D(0)
    lc = theory.get("lambda_c")
    t, dv = _series(traj, "dissipation")
    if lc is not None and lc > 0 and dv.size and dv[0] > 0:
        m["dissipation_ratio_max"] = float(np.max(dv / (dv[0] * np.exp(-2 * lc * t))))
    sm = theory.get("second_moment")
    t, m2 = _series(traj, "moment2")
    if sm is not None and m2.size:
        bound = max(float(m2[0]), sm["ball"])
        m["moment_ratio_max"] = float(np.max(m2) / bound)
        m["moment_bound"] = bound
    la = theory.get("lambda_a")
    t, gap = _series(traj, "energy_gap")
    _, wr = _series(traj, "wbar_ref")
    if la is not None and la > 0 and gap.size and wr.size == gap.size:
        ok = gap > 1e-12
        if np.any(ok):
            m["talagrand_ratio_max"] = float(np.max(wr[ok] ** 2 / (2.0 / la * gap[ok])))
    if "G_d" in ref:
        t, gd = _series(traj, "G_d")
        for ti, gi in zip(t, gd):
            traj.record("G_d_gap", ti, gi - ref["G_d"])
    if isinstance(ref.get("rho"), GridDensity) and isinstance(last.rho, GridDensity):
        r = ref["rho"]
        if r.cells == last.rho.cells:
            m["l1_ref_final"] = float(r.h * np.sum(np.abs(last.rho.values - r.values)))
    br = traj.meta.get("bound_ratio_max")
    if br is not None:
        m["bound_ratio_max"] = float(br)
    if cfg.diagnostics.classifier:
        m.update(_classifier_summary(spec, traj))
    return m


def _classifier_summary(spec: EnergySpec, traj: Trajectory) -> dict:
    first, last = traj.snapshots[0], traj.final
    pi = spec.extras.pi if spec.extras is not None else None
    if pi is None or not isinstance(first.rho, ParticleEnsemble) or not isinstance(last.mu, DiracState):
        raise ConfigError("diagnostics.classifier: needs particles, a dirac classifier and a population pi")
    rule = lambda z, x: predict_label0(spec.coupling, z, x)
    p0 = rule(first.rho.points, first.mu.point)
    subs = {"initially_correct": np.flatnonzero(p0), "initially_misclassified": np.flatnonzero(~p0)}
    out = {}
    for tag, snap in (("initial", first), ("final", last)):
        cm = classifier_metrics(snap.rho, pi, snap.mu.point, rule, subs)
        out[f"{tag}_accuracy"] = cm.accuracy
        out[f"{tag}_precision"] = cm.precision
        for k, v in cm.subgroup_accuracies.items():
            out[f"{tag}_subgroup_{k}"] = v
    return out


def fits(cfg: ScenarioConfig, traj: Trajectory):
    dg = cfg.diagnostics
    fit = None
    err = None
    if dg.rate_channel:
        t, v = _series(traj, dg.rate_channel)
        try:
            f = fit_rate(t, v, dg.rate_window)
            fit = {"channel": dg.rate_channel, **f.to_dict()}
        except InvalidSeriesError as exc:
            err = str(exc)
    extra = {}
    for ch in dg.extra_rates:
        t, v = _series(traj, ch)
        try:
            extra[f"rate_{ch}"] = fit_rate(t, v, dg.rate_window).rate
        except InvalidSeriesError:
            extra[f"rate_{ch}"] = None
    return fit, err, extra


def evaluate_checks(cfg: ScenarioConfig, metrics: dict, theory: dict) -> List[dict]:
    out = []
    for c in cfg.checks:
        val = metrics.get(c.metric)
        entries = []
        if c.min is not None:
            entries.append(("min", c.min))
        if c.max is not None:
            entries.append(("max", c.max))
        if c.min_ref is not None:
            ref = theory.get(c.min_ref)
            entries.append(("min", None if ref is None else c.min_factor * ref))
        for kind, bound in entries:
            ok = _finite(val) and bound is not None and (val >= bound if kind == "min" else val <= bound)
            out.append({"metric": c.metric, "value": val, "kind": kind, "bound": bound,
                        "ref": c.min_ref if kind == "min" and c.min_ref else None, "passed": bool(ok)})
    return out


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def summary_json(summary: dict) -> str:
    return json.dumps(_clean(summary), sort_keys=True, indent=2) + "\n"


def theory_block(spec: EnergySpec) -> dict:
    th = rate_constants(spec).to_dict()
    th["second_moment"] = second_moment_constant(spec)
    th["best_response_bound"] = best_response_bound(spec)
    return th


# Entry point --------------------------------------------------------------


def run_scenario(cfg: ScenarioConfig, out_dir=None, seed: Optional[int] = None) -> RunResult:
    """Run one scenario; write CSV, SVG and ``summary.json`` under ``out_dir`` if given."""
    t_start = _time.perf_counter()
    if seed is not None:
        cfg = cfg.with_seed(seed)
    spec = validate(cfg)
    theory = theory_block(spec)
    rho0, mu0 = build_initial(cfg, spec, cfg.init)
    if cfg.dynamics.kind == "fixed_x" and cfg.dynamics.x_value is not None:
        mu0 = DiracState(cfg.dynamics.x_value)
    ref = compute_reference(cfg, spec, rho0, mu0)
    obs = make_observer(cfg, spec, ref)
    traj = run_dynamics(cfg, spec, rho0, mu0, [obs], ref)
    alt = None
    if cfg.init_alt is not None:
        ra, ma = build_initial(cfg, spec, cfg.init_alt)
        alt = run_dynamics(cfg, spec, ra, ma, [obs], ref)
    metrics = derived_metrics(cfg, spec, traj, alt, ref, theory)
    fit, fit_err, extra = fits(cfg, traj)
    metrics.update(extra)
    metrics["fitted_rate"] = fit["rate"] if fit else None
    metrics["r_squared"] = fit["r_squared"] if fit else None
    checks = evaluate_checks(cfg, metrics, theory)
    choices = {k: v for k, v in traj.meta.items()
               if k in ("rounds", "perturb_scale", "inner_steps", "surrogate", "perturbation", "updates")}
    if cfg.solver.kind == "particles":
        choices["mu_every"] = cfg.solver.mu_every
        choices["mu_dt"] = cfg.solver.mu_dt if cfg.solver.mu_dt is not None else cfg.time.dt
    summary = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "description": cfg.description,
        "seed": cfg.seed,
        "config_sha256": cfg.digest,
        "dynamics": cfg.dynamics.kind,
        "solver": cfg.solver.kind,
        "reference": cfg.reference.kind,
        "energy": spec.to_dict(),
        "theory": theory,
        "fitted_rate": metrics["fitted_rate"],
        "fit": fit,
        "fit_error": fit_err,
        "metrics": metrics,
        "choices": choices,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
    result = RunResult(summary, traj, alt, reference=ref)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if cfg.outputs.csv:
            result.files.append(traj.write_csv(out, snapshots=cfg.outputs.snapshots))
            if alt is not None:
                result.files.append(alt.write_csv(out / "alt", snapshots=cfg.outputs.snapshots))
        if cfg.outputs.svg:
            from .charts import emit_charts

            result.files.extend(emit_charts(traj, summary, out, reference=ref))
    summary["wall_clock"] = _time.perf_counter() - t_start
    if out_dir is not None:
        p = Path(out_dir) / "summary.json"
        p.write_text(summary_json(summary))
        result.files.append(p)
    return result
