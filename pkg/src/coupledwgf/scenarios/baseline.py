"""Mean-shift performative-prediction baseline.

Each update probes ``rounds`` perturbed classifiers ``x + δ``, ``δ ~ U(−s, s)``,
lets the population respond to each probe for ``inner_steps`` solver steps,
fits the population mean linearly in the probed parameter and then sets the
classifier to the minimizer of a surrogate loss in which the population is
the initial one translated to the predicted mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ..energy import EnergySpec, extras_value
from ..errors import InvalidArgumentError, SingularFitError
from ..fv_solver import FvOperator, _raw_grid
from ..measures import DiracState, GridDensity, nodes
from ..trajectory import Observer, Trajectory


@dataclass(frozen=True)
class BaselineConfig:
    #: probes per classifier update
    rounds: int = 16
    #: half-width of the uniform perturbation
    perturb_scale: float = 0.5
    #: solver steps of population response per probe
    inner_steps: int = 100
    seed: int = 0
    #: search interval for the surrogate minimizer
    x_bounds: Optional[tuple] = None
    #: grid points of the coarse search before refinement
    search_points: int = 201

    def __post_init__(self):
        if self.rounds < 2:
            raise InvalidArgumentError("mean-shift baseline needs at least 2 probes per update")
        if not self.perturb_scale > 0 or self.inner_steps < 1:
            raise InvalidArgumentError("perturb_scale must be positive and inner_steps at least 1")


def fit_linear_response(xs: Sequence[float], means: Sequence[float]):
    """Least-squares ``mean ≈ c0 + c1 x``."""
    xs = np.asarray(xs, dtype=float)
    means = np.asarray(means, dtype=float)
    if xs.size < 2 or np.ptp(xs) <= 1e-14 * max(1.0, float(np.max(np.abs(xs)))):
        raise SingularFitError("all probes are identical; the linear response is undetermined")
    X = np.column_stack([np.ones_like(xs), xs])
    (c0, c1), *_ = np.linalg.lstsq(X, means, rcond=None)
    return float(c0), float(c1)


def minimize_1d(fun: Callable[[float], float], bounds, points: int = 201) -> float:
    """Global coarse search then bounded Brent refinement."""
    lo, hi = map(float, bounds)
    grid = np.linspace(lo, hi, points)
    vals = np.array([fun(x) for x in grid])
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, points - 1)]
    if b <= a:
        return float(grid[k])
    res = minimize_scalar(fun, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    return float(res.x) if res.fun <= vals[k] else float(grid[k])


def mean_shift_updates(x_init: float, respond: Callable[[float], float],
                       surrogate: Callable[[float, float], float], bounds, cfg: BaselineConfig,
                       n_updates: int, rng: Optional[np.random.Generator] = None):
    """Generic loop. ``respond(x)`` returns the population mean after a probe at ``x``
    and ``surrogate(x, m)`` the loss at ``x`` for a population with mean ``m``.

    Returns the list of classifier values after each update.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    x = float(x_init)
    history = []
    for _ in range(n_updates):
        probes = x + rng.uniform(-cfg.perturb_scale, cfg.perturb_scale, cfg.rounds)
        means = [respond(p) for p in probes]
        c0, c1 = fit_linear_response(probes, means)
        x = minimize_1d(lambda y: surrogate(y, c0 + c1 * y), bounds, cfg.search_points)
        history.append((x, c0, c1))
    return history


def classifier_loss(spec: EnergySpec, rho, x) -> float:
    """``∫f dρ + V₂(x) + ∫f₂ dπ + κ/2‖x − x₀‖²``: the part of the energy the classifier minimizes."""
    rp, rw = nodes(rho)
    x = np.atleast_2d(np.asarray(x, dtype=float).reshape(1, -1))
    return float(spec.coupling.mean_f_x(rp, rw, x)[0] + spec.v2.value(x)[0]
                 + extras_value(spec, x)[0])


def _shifted_loss(spec, pts, w, shift, x):
    xx = np.array([[x]])
    return float(spec.coupling.mean_f_x(pts + shift, w, xx)[0] + spec.v2.value(xx)[0]
                 + extras_value(spec, xx)[0])


def mean_shift_baseline(spec: EnergySpec, rho0: GridDensity, cfg: BaselineConfig, t_end: float,
                        dt: float, x_init: float, observers: Sequence[Observer] = (),
                        snapshot_every: Optional[float] = None) -> Trajectory:
    """Run the baseline against the finite-volume population until ``t_end``.

    The population evolves continuously: every probe advances it by
    ``inner_steps`` steps under the probed classifier. Channels: ``x_0``,
    ``classifier_loss``, ``fit_c0``, ``fit_c1`` at every update.
    """
    if spec.dim_mu != 1 or spec.dim_rho != 1:
        raise InvalidArgumentError("mean-shift baseline needs a one-dimensional classifier and population")
    if not isinstance(rho0, GridDensity):
        raise InvalidArgumentError("mean-shift baseline runs on the finite-volume population")
    op = FvOperator(spec, rho0)
    bounds = cfg.x_bounds or (rho0.lo, rho0.hi)
    pts0, w0 = nodes(rho0)
    m0 = float(w0 @ pts0[:, 0])
    rng = np.random.default_rng(cfg.seed)
    v = np.array(rho0.values)
    x = float(x_init)
    t = 0.0
    probe_time = cfg.inner_steps * dt
    n_updates = int(np.floor(t_end / (cfg.rounds * probe_time) + 1e-9))
    if n_updates < 1:
        raise InvalidArgumentError("t_end is shorter than one baseline update")
    traj = Trajectory(meta={"solver": "fv", "dt": dt, "dynamics": "mean_shift_baseline",
                            "rounds": cfg.rounds, "perturb_scale": cfg.perturb_scale,
                            "inner_steps": cfg.inner_steps, "surrogate": "translated initial population",
                            "perturbation": "uniform", "updates": n_updates})
    snap_stride = 1 if snapshot_every is None else max(1, int(round(snapshot_every / (cfg.rounds * probe_time))))

    def record(t, v, x, snap):
        rho = _raw_grid(op.gr, v)
        mu = DiracState([x])
        if snap:
            traj.add_snapshot(t, rho, mu, observers)
        else:
            for obs in observers:
                for k, val in obs(t, rho, mu).items():
                    traj.record(k, t, val)
        traj.record("x_0", t, x)
        traj.record("classifier_loss", t, classifier_loss(spec, rho, [x]))

    record(0.0, v, x, True)
    for u in range(1, n_updates + 1):
        probes = x + rng.uniform(-cfg.perturb_scale, cfg.perturb_scale, cfg.rounds)
        means = []
        for p in probes:
            mu = DiracState([p])
            for _ in range(cfg.inner_steps):
                v, _ = op.advance(v, mu, dt, freeze_mu=True)
            t += probe_time
            means.append(float(op.gr.h * v @ op.gr.centers))
        c0, c1 = fit_linear_response(probes, means)
        x = minimize_1d(lambda y: _shifted_loss(spec, pts0, w0, c0 + c1 * y - m0, y),
                        bounds, cfg.search_points)
        traj.record("fit_c0", t, c0)
        traj.record("fit_c1", t, c1)
        record(t, v, x, u % snap_stride == 0 or u == n_updates)
    return traj
