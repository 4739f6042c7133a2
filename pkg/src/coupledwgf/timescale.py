"""Timescale-separated competitive dynamics.

Fast algorithm: μ = δ_x with ``x = b(ρ) = argmin_x G(ρ, x)`` re-solved at every
step while ρ ascends ``G``. Fast population: ``ρ = r(x) = argmax_ρ G(ρ, x)``
(a Gibbs state) re-solved at every step while x descends ``G_d(x) = G(r(x), x)``.
Here ``G(ρ, x) = F_c(ρ, δ_x)``, so ``β`` must be zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .energy import (
    EnergySpec,
    Mode,
    best_response_bound,
    eval_energy,
    extras_grad,
    extras_hess,
    extras_value,
    grad_field_mu,
)
from .errors import ConvergenceError, ConvexityError, InvalidArgumentError
from .fv_solver import GridSpec, FvOperator, _raw_grid, gibbs_steady_state
from .measures import DiracState, GridDensity, Measure, ParticleEnsemble, nodes
from .particle_sim import SimState, StepConfig, step as particle_step, stability_bound
from .trajectory import Observer, Trajectory, step_schedule

GRAD_TOL = 1e-10
EL_TOL = 1e-8


@dataclass
class BestResponseReport:
    argmin_or_argmax: Union[np.ndarray, GridDensity]
    iterations: int
    residual: float
    #: {"norm_sq", "bound"} when the boundedness constants exist
    bound_check: Optional[dict] = None

    @property
    def value(self):
        return self.argmin_or_argmax


def _check_spec(spec: EnergySpec):
    if spec.mode is not Mode.COMPETITIVE:
        raise InvalidArgumentError("timescale-separated flows are defined for the competitive game")
    if spec.beta != 0:
        raise InvalidArgumentError("the algorithm is a point, so beta must be zero")


# Fast algorithm -------------------------------------------------------------


def _row(x):
    # a single d-vector is one point, not d points
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _x_objective(spec, rp, rw, x):
    x = _row(x)
    return spec.coupling.mean_f_x(rp, rw, x) + spec.v2.value(x) + extras_value(spec, x)


def _x_grad(spec, rp, rw, x):
    x = _row(x)
    return spec.coupling.mean_grad_x(rp, rw, x) + spec.v2.grad(x) + extras_grad(spec, x)


def _x_hess(spec, rp, rw, x):
    x = _row(x)
    return spec.coupling.mean_hess_xx(rp, rw, x) + spec.v2.hess(x) + extras_hess(spec, x)


def best_response_x(spec: EnergySpec, rho: Measure, x_init=None, tol: float = GRAD_TOL,
                    max_iter: int = 100) -> BestResponseReport:
    """Newton iteration for ``b(ρ) = argmin_x ∫f dρ + V₂(x) + ∫f₂ dπ + κ/2‖x − x₀‖²``.

    Uses the analytic Hessian ``Q(ρ)`` and a backtracking line search.
    """
    if spec.extras is None:
        raise InvalidArgumentError("best response of x needs application terms with kappa > 0")
    rp, rw = nodes(rho)
    x = np.array(spec.extras.x0 if x_init is None else x_init, dtype=float).reshape(-1)
    g = _x_grad(spec, rp, rw, x)[0]
    gn = float(np.linalg.norm(g))
    it = 0
    while gn >= tol:
        if it >= max_iter:
            raise ConvergenceError(f"Newton for b(rho) hit {max_iter} iterations, |grad| {gn:.3g}",
                                   residual=gn)
        H = _x_hess(spec, rp, rw, x)[0]
        ev = np.linalg.eigvalsh(H)
        if ev[0] <= 0:
            raise ConvexityError(f"Hessian of G(rho, .) not positive definite, min eigenvalue {ev[0]:.3g}")
        d = -np.linalg.solve(H, g)
        f0 = _x_objective(spec, rp, rw, x)[0]
        t = 1.0
        while t > 1e-12:
            xn = x + t * d
            if _x_objective(spec, rp, rw, xn)[0] <= f0 + 1e-4 * t * (g @ d) + 1e-14 * abs(f0):
                break
            t *= 0.5
        x = x + t * d
        g = _x_grad(spec, rp, rw, x)[0]
        gn = float(np.linalg.norm(g))
        it += 1
    bound = best_response_bound(spec)
    check = None if bound is None else {"norm_sq": float(x @ x), "bound": bound}
    return BestResponseReport(x, it, gn, check)


def _advance_rho_fv(op: FvOperator, v, x, dt):
    new, _ = op.advance(v, DiracState(x), dt, freeze_mu=True)
    return new


def fast_algorithm_flow(spec: EnergySpec, rho0: Measure, t_end: float, dt: float,
                        solver: str = "fv", observers: Sequence[Observer] = (),
                        snapshot_every: Optional[float] = None, seed: int = 0,
                        keep_snapshots: bool = True) -> Trajectory:
    """ρ ascends ``G(ρ, b(ρ))`` with ``b`` re-solved (warm-started) every step.

    Records channels ``b_<i>`` and ``b_norm_sq`` at snapshots; the largest
    ``‖b‖²/bound`` over all steps is stored in ``meta["bound_ratio_max"]``.
    """
    _check_spec(spec)
    n_steps, stride = step_schedule(0.0, t_end, dt, snapshot_every)
    traj = Trajectory(meta={"solver": solver, "dt": dt, "dynamics": "fast_x"})
    if solver == "fv":
        if not isinstance(rho0, GridDensity):
            raise InvalidArgumentError("the fv solver needs a GridDensity")
        op = FvOperator(spec, rho0)
        v = np.array(rho0.values)
        rho = rho0
    elif solver == "particles":
        if not isinstance(rho0, ParticleEnsemble):
            raise InvalidArgumentError("the particle solver needs a ParticleEnsemble")
        cfg = StepConfig(dt, freeze_mu=True)
        st = None
        rho = rho0
    else:
        raise InvalidArgumentError(f"unknown solver {solver!r}")
    ratio_max = 0.0
    rep = best_response_x(spec, rho)
    x = rep.value

    def note(t, rho, x, rep):
        nonlocal ratio_max
        if rep.bound_check is not None:
            ratio_max = max(ratio_max, rep.bound_check["norm_sq"] / max(rep.bound_check["bound"], 1e-300))

    def record(t, rho, x):
        mu = DiracState(x)
        traj.add_snapshot(t, rho, mu, observers)
        for i, xi in enumerate(x):
            traj.record(f"b_{i}", t, xi)
        traj.record("b_norm_sq", t, float(x @ x))

    note(0.0, rho, x, rep)
    record(0.0, rho, x)
    if solver == "particles":
        st = SimState.initial(rho0, DiracState(x), seed)
    for k in range(1, n_steps + 1):
        t = k * dt
        try:
            if solver == "fv":
                v = _advance_rho_fv(op, v, x, dt)
                rho = _raw_grid(op.gr, v)
            else:
                st = particle_step(spec, SimState(st.rho, DiracState(x), st.time, st.rng, st.steps), cfg)
                rho = st.rho
            rep = best_response_x(spec, rho, x_init=x)
        except Exception as exc:
            raise type(exc)(f"at t={t:.6g}: {exc}") from exc
        x = rep.value
        note(t, rho, x, rep)
        if k % stride == 0 or k == n_steps:
            if keep_snapshots or k == n_steps:
                record(t, rho, x)
            else:
                for i, xi in enumerate(x):
                    traj.record(f"b_{i}", t, xi)
                traj.record("b_norm_sq", t, float(x @ x))
                for obs in observers:
                    for name, val in obs(t, rho, DiracState(x)).items():
                        traj.record(name, t, val)
    traj.meta["bound"] = best_response_bound(spec)
    traj.meta["bound_ratio_max"] = ratio_max if traj.meta["bound"] is not None else None
    return traj


def fast_x_fixed_point(spec: EnergySpec, grid, damping: float = 0.5, tol: float = 1e-12,
                       max_iter: int = 5000):
    """Fixed point ``ρ∞ = r(b(ρ∞))`` on a grid by damped iteration.

    Returns ``(ρ∞, b(ρ∞))``.
    """
    _check_spec(spec)
    g = GridSpec.of(grid)
    rho = gibbs_steady_state(spec, "rho", DiracState(spec.extras.x0), g, tol=tol).density
    x = None
    change = np.inf
    for _ in range(max_iter):
        x = best_response_x(spec, rho, x_init=x).value
        tgt = gibbs_steady_state(spec, "rho", DiracState(x), g, tol=tol, init=rho).density
        new = (1 - damping) * rho.values + damping * tgt.values
        change = float(np.max(np.abs(new - rho.values)))
        rho = _raw_grid(g, new / (g.h * new.sum()))
        if change < tol:
            x = best_response_x(spec, rho, x_init=x).value
            return rho, x
    raise ConvergenceError(f"fast-x fixed point hit {max_iter} iterations, last change {change:.3g}",
                           residual=change)


# Fast population ------------------------------------------------------------


def best_response_rho(spec: EnergySpec, x, grid, init: Optional[GridDensity] = None,
                      el_tol: float = EL_TOL) -> BestResponseReport:
    """Gibbs maximizer ``r(x) ∝ exp((f(·, x) − V₁ − W₁∗r)/α)`` on a grid."""
    _check_spec(spec)
    if not spec.alpha > 0:
        raise InvalidArgumentError("best response of rho needs alpha > 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    res = gibbs_steady_state(spec, "rho", DiracState(x), grid, tol=1e-13, init=init,
                             max_iter=100_000)
    if not res.residual < el_tol:
        raise ConvergenceError(f"Euler-Lagrange residual {res.residual:.3g} above {el_tol:g}",
                               residual=res.residual)
    return BestResponseReport(res.density, res.iterations, res.residual)


def reduced_energy(spec: EnergySpec, x, grid, init: Optional[GridDensity] = None):
    """``G_d(x) = G(r(x), x)`` and the maximizer used."""
    r = best_response_rho(spec, x, grid, init=init).value
    return eval_energy(spec, r, DiracState(np.atleast_1d(x))), r


def envelope_gradient(spec: EnergySpec, r: Measure, x) -> np.ndarray:
    """``∇_x G(ρ, x)`` at ``ρ = r``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return grad_field_mu(spec, r, DiracState(x), x[None, :])[0]


def fast_population_flow(spec: EnergySpec, x0, t_end: float, dt: float, grid,
                         observers: Sequence[Observer] = (), snapshot_every: Optional[float] = None,
                         x_ref=None, keep_snapshots: bool = True) -> Trajectory:
    """Explicit Euler on ``ẋ = −∇_x G(r(x), x)``.

    Channels: ``x_<i>``, ``G_d`` and, when ``x_ref`` is given, ``x_dist``.
    """
    _check_spec(spec)
    g = GridSpec.of(grid)
    n_steps, stride = step_schedule(0.0, t_end, dt, snapshot_every)
    lim = stability_bound(spec)
    if dt > lim * (1 + 1e-12):
        raise InvalidArgumentError(f"dt={dt} exceeds the stability bound {lim:.6g}")
    traj = Trajectory(meta={"solver": "fv", "dt": dt, "dynamics": "fast_rho"})
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    r = None

    def record(t, x, r, snap):
        gd = eval_energy(spec, r, DiracState(x))
        if snap:
            traj.add_snapshot(t, r, DiracState(x.copy()), observers)
        else:
            for obs in observers:
                for name, val in obs(t, r, DiracState(x)).items():
                    traj.record(name, t, val)
        for i, xi in enumerate(x):
            traj.record(f"x_{i}", t, xi)
        traj.record("G_d", t, gd)
        if x_ref is not None:
            traj.record("x_dist", t, float(np.linalg.norm(x - np.asarray(x_ref, dtype=float))))

    r = best_response_rho(spec, x, g).value
    record(0.0, x, r, True)
    for k in range(1, n_steps + 1):
        t = k * dt
        try:
            x = x - dt * envelope_gradient(spec, r, x)
            r = best_response_rho(spec, x, g, init=r).value
        except Exception as exc:
            raise type(exc)(f"at t={t:.6g}: {exc}") from exc
        if k % stride == 0 or k == n_steps:
            record(t, x, r, keep_snapshots or k == n_steps)
    traj.meta["x_final"] = x.tolist()
    return traj


def fast_rho_fixed_point(spec: EnergySpec, grid, x_init=None, tol: float = 1e-12,
                         max_iter: int = 200) -> np.ndarray:
    """Stationary point of ``G_d`` from the envelope gradient.

    Newton on the gradient with a finite-difference Jacobian; in one dimension
    a bracketing root search takes over if Newton stalls.
    """
    _check_spec(spec)
    g = GridSpec.of(grid)
    x = np.atleast_1d(np.asarray(spec.extras.x0 if x_init is None else x_init, dtype=float)).copy()

    def grad(x):
        r = best_response_rho(spec, x, g).value
        return envelope_gradient(spec, r, x)

    gx = grad(x)
    eps = 1e-6
    for _ in range(max_iter):
        if np.linalg.norm(gx) < tol:
            return x
        J = np.empty((x.size, x.size))
        for i in range(x.size):
            e = np.zeros(x.size)
            e[i] = eps
            J[:, i] = (grad(x + e) - grad(x - e)) / (2 * eps)
        x_new = x - np.linalg.solve(J, gx)
        g_new = grad(x_new)
        if np.linalg.norm(g_new) >= np.linalg.norm(gx):
            break
        x, gx = x_new, g_new
    if x.size == 1:
        f = lambda s: grad(np.array([s]))[0]
        lo, hi = x[0] - 1.0, x[0] + 1.0
        while f(lo) > 0:
            lo -= 1.0
        while f(hi) < 0:
            hi += 1.0
        return np.array([brentq(f, lo, hi, xtol=1e-14, rtol=1e-15)])
    raise ConvergenceError("stationary point of the reduced energy not found", residual=float(np.linalg.norm(gx)))


def danskin_check(spec: EnergySpec, x, h: float, grid) -> dict:
    """Envelope gradient of ``G_d`` against Richardson-extrapolated central differences.

    ``fd = (4 D(h) − D(2h)) / 3`` with ``D(h)`` the central difference; every
    evaluation re-solves ``r``.
    """
    if not h > 0:
        raise InvalidArgumentError("h must be positive")
    g = GridSpec.of(grid)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _, r = reduced_energy(spec, x, g)
    analytic = envelope_gradient(spec, r, x)
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = 1.0

        def central(s):
            gp, _ = reduced_energy(spec, x + s * e, g, init=r)
            gm, _ = reduced_energy(spec, x - s * e, g, init=r)
            return (gp - gm) / (2 * s)

        fd[i] = (4 * central(h) - central(2 * h)) / 3
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(fd)))
    err = 0.0 if scale == 0 else float(np.linalg.norm(analytic - fd)) / scale
    return {"analytic": analytic, "fd": fd, "rel_err": err}
