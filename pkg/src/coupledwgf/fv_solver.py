"""One-dimensional finite-volume solver for the coupled two-species system.

Each species with density ``v`` moves with velocity ``−∂(Φ + D log v)``, where
``Φ`` is its potential from :mod:`energy` and ``D`` its diffusion (α or β).
Edge fluxes use the exponentially fitted Scharfetter–Gummel form

    J_{k+½} = (D/h) [B(ΔΦ/D) v_k − B(−ΔΦ/D) v_{k+1}],   B(s) = s / (eˢ − 1),

which is upwind for dominant drift, central for dominant diffusion, and
vanishes exactly on the discrete Gibbs state ``v ∝ exp(−Φ/D)``. With ``D = 0``
it reduces to the first-order upwind flux. Boundaries are zero-flux, time
stepping is explicit Euler, and both species are updated from the same time
level. Dirac species move by explicit Euler on their ODE.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .energy import (
    EnergySpec,
    coupling_sign,
    extras_value,
    grad_field_mu,
)
from .errors import ConvergenceError, InvalidArgumentError, StabilityError
from .measures import DiracState, GridDensity, Measure, grid_centers, nodes
from .trajectory import Observer, Trajectory, step_schedule

#: fraction of the explicit positivity limit allowed per step
CFL_SAFETY = 0.5


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    cells: int

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.cells

    @property
    def centers(self) -> np.ndarray:
        return grid_centers(self.lo, self.hi, self.cells)

    @classmethod
    def of(cls, g) -> "GridSpec":
        if isinstance(g, GridSpec):
            return g
        if isinstance(g, GridDensity):
            return cls(g.lo, g.hi, g.cells)
        lo, hi, cells = g
        return cls(float(lo), float(hi), int(cells))


@dataclass(frozen=True)
class FvState:
    rho: GridDensity
    mu: Union[GridDensity, DiracState]
    time: float = 0.0


def bernoulli(s: np.ndarray) -> np.ndarray:
    """``B(s) = s / (eˢ − 1)`` with the series ``1 − s/2`` near zero."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < 1e-8
    safe = np.where(small, 1.0, s)
    with np.errstate(over="ignore"):
        out = safe / np.expm1(safe)
    return np.where(small, 1.0 - 0.5 * s, out)


def edge_rates(phi: np.ndarray, diff: float, h: float):
    """Transfer rates ``(right, left)`` across interior edges.

    ``right[k]`` moves mass from cell k to k+1, ``left[k]`` from k+1 to k.
    """
    dphi = np.diff(phi)
    if diff > 0:
        s = dphi / diff
        c = diff / h**2
        return c * bernoulli(s), c * bernoulli(-s)
    u = -dphi / h
    return np.maximum(u, 0.0) / h, np.maximum(-u, 0.0) / h


def outflow_rates(right: np.ndarray, left: np.ndarray) -> np.ndarray:
    out = np.zeros(right.size + 1)
    out[:-1] += right
    out[1:] += left
    return out


def apply_rates(v: np.ndarray, right: np.ndarray, left: np.ndarray, dt: float) -> np.ndarray:
    """Explicit Euler step written as a sum of nonnegative terms."""
    new = v * (1.0 - dt * outflow_rates(right, left))
    new[1:] += dt * right * v[:-1]
    new[:-1] += dt * left * v[1:]
    return new


def max_stable_dt_from_rates(right, left) -> float:
    m = float(np.max(outflow_rates(right, left))) if right.size else 0.0
    return np.inf if m == 0 else CFL_SAFETY / m


class FvOperator:
    """Precomputed grid quantities for one spec and pair of grids.

    Interaction kernels and, for two grid species, the coupling matrix are
    tabulated once; convolutions are then dense O(n²) matrix-vector products.
    """

    def __init__(self, spec: EnergySpec, rho_grid, mu_grid=None):
        if spec.dim_rho != 1:
            raise InvalidArgumentError("finite-volume species must be one-dimensional")
        self.spec = spec
        self.gr = GridSpec.of(rho_grid)
        self.gm = None if mu_grid is None else GridSpec.of(mu_grid)
        cr = self.gr.centers[:, None]
        self.v1 = spec.v1.value(cr)
        self.k1 = None
        if not spec.w1.is_zero():
            diff = cr - cr.T
            self.k1 = spec.w1.value(diff.reshape(-1, 1)).reshape(diff.shape) * self.gr.h
        self.sign = coupling_sign(spec.mode)
        if self.gm is not None:
            cm = self.gm.centers[:, None]
            self.v2 = spec.v2.value(cm) + extras_value(spec, cm)
            self.k2 = None
            if not spec.w2.is_zero():
                diff = cm - cm.T
                self.k2 = spec.w2.value(diff.reshape(-1, 1)).reshape(diff.shape) * self.gm.h
            self.fmat = spec.coupling.f(cr, cm)
        self._cache_r = None
        self._cache_m = None

    # potentials on the grids
    def phi_rho(self, v_rho, mu) -> np.ndarray:
        spec = self.spec
        if isinstance(mu, DiracState):
            coup = spec.coupling.mean_f_z(self.gr.centers[:, None], mu.point[None, :], np.ones(1))
        else:
            coup = self.fmat @ (self.gm.h * mu)
        phi = -self.sign * coup + self.v1
        if self.k1 is not None:
            phi = phi + self.k1 @ v_rho
        return phi

    def phi_mu(self, v_rho, v_mu) -> np.ndarray:
        phi = self.fmat.T @ (self.gr.h * v_rho) + self.v2
        if self.k2 is not None:
            phi = phi + self.k2 @ v_mu
        return phi

    def _rates(self, which, phi, diff, h):
        cache = self._cache_r if which == "r" else self._cache_m
        if cache is not None and np.array_equal(cache[0], phi):
            return cache[1], cache[2]
        right, left = edge_rates(phi, diff, h)
        if which == "r":
            self._cache_r = (phi, right, left)
        else:
            self._cache_m = (phi, right, left)
        return right, left

    def max_dt(self, v_rho, mu, freeze_rho=False, freeze_mu=False) -> float:
        dt = np.inf
        if not freeze_rho:
            r, l = self._rates("r", self.phi_rho(v_rho, mu), self.spec.alpha, self.gr.h)
            dt = min(dt, max_stable_dt_from_rates(r, l))
        if not freeze_mu and not isinstance(mu, DiracState):
            r, l = self._rates("m", self.phi_mu(v_rho, mu), self.spec.beta, self.gm.h)
            dt = min(dt, max_stable_dt_from_rates(r, l))
        return dt

    def advance(self, v_rho: np.ndarray, mu, dt: float, freeze_rho=False, freeze_mu=False):
        """One Jacobi step on raw arrays. ``mu`` is a value array or a DiracState."""
        spec = self.spec
        new_r, new_m = v_rho, mu
        if not freeze_rho:
            r, l = self._rates("r", self.phi_rho(v_rho, mu), spec.alpha, self.gr.h)
            lim = max_stable_dt_from_rates(r, l)
            if dt > lim * (1 + 1e-12):
                raise StabilityError(f"dt={dt:.6g} exceeds the rho positivity bound {lim:.6g}")
            new_r = apply_rates(v_rho, r, l, dt)
            _check_grid_step(v_rho, new_r, self.gr.h, "rho")
        if not freeze_mu:
            if isinstance(mu, DiracState):
                if spec.beta > 0:
                    raise InvalidArgumentError("a moving Dirac mu requires beta = 0")
                rho = _raw_grid(self.gr, v_rho)
                vel = -grad_field_mu(spec, rho, mu, mu.point[None, :])[0]
                new_m = DiracState(mu.point + dt * vel)
            else:
                r, l = self._rates("m", self.phi_mu(v_rho, mu), spec.beta, self.gm.h)
                lim = max_stable_dt_from_rates(r, l)
                if dt > lim * (1 + 1e-12):
                    raise StabilityError(f"dt={dt:.6g} exceeds the mu positivity bound {lim:.6g}")
                new_m = apply_rates(mu, r, l, dt)
                _check_grid_step(mu, new_m, self.gm.h, "mu")
        return new_r, new_m


def _check_grid_step(old, v, h, who):
    drift = h * (v.sum() - old.sum())
    if abs(drift) > 1e-12:
        raise AssertionError(f"{who} mass changed by {drift!r} in one step: scheme bug")
    if v.min() < 0:
        raise AssertionError(f"{who} has a negative cell value {v.min()!r}: scheme bug")


def _raw_grid(g: GridSpec, v: np.ndarray) -> GridDensity:
    out = GridDensity.__new__(GridDensity)
    object.__setattr__(out, "lo", g.lo)
    object.__setattr__(out, "hi", g.hi)
    vv = np.array(v, dtype=float)
    vv.setflags(write=False)
    object.__setattr__(out, "values", vv)
    return out


def _mu_raw(mu):
    return mu if isinstance(mu, DiracState) else np.array(mu.values, dtype=float)


def _mu_wrap(op: FvOperator, mu):
    return mu if isinstance(mu, DiracState) else _raw_grid(op.gm, mu)


def make_operator(spec: EnergySpec, state: FvState) -> FvOperator:
    mu_grid = None if isinstance(state.mu, DiracState) else state.mu
    return FvOperator(spec, state.rho, mu_grid)


def fv_step(spec: EnergySpec, state: FvState, dt: float, freeze_rho: bool = False,
            freeze_mu: bool = False, operator: Optional[FvOperator] = None) -> FvState:
    """Advance ``state`` by ``dt``. Refuses steps beyond the positivity bound."""
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    op = operator or make_operator(spec, state)
    r, m = op.advance(np.array(state.rho.values), _mu_raw(state.mu), dt, freeze_rho, freeze_mu)
    return FvState(_raw_grid(op.gr, r), _mu_wrap(op, m), state.time + dt)


def max_stable_dt(spec: EnergySpec, state: FvState, freeze_rho=False, freeze_mu=False) -> float:
    op = make_operator(spec, state)
    return op.max_dt(np.array(state.rho.values), _mu_raw(state.mu), freeze_rho, freeze_mu)


def fv_simulate(spec: EnergySpec, state0: FvState, t_end: float, dt: float,
                observers: Sequence[Observer] = (), snapshot_every: Optional[float] = None,
                freeze_rho: bool = False, freeze_mu: bool = False,
                keep_snapshots: bool = True) -> Trajectory:
    """Integrate to ``t_end``, recording snapshots and observer channels."""
    if not t_end > state0.time:
        raise InvalidArgumentError("t_end must exceed the initial time")
    n_steps, stride = step_schedule(state0.time, t_end, dt, snapshot_every)
    op = make_operator(spec, state0)
    traj = Trajectory(meta={"solver": "fv", "dt": dt, "cells": op.gr.cells})
    r, m = np.array(state0.rho.values), _mu_raw(state0.mu)
    traj.add_snapshot(state0.time, state0.rho, state0.mu, observers)
    for k in range(1, n_steps + 1):
        t = state0.time + k * dt
        try:
            r, m = op.advance(r, m, dt, freeze_rho, freeze_mu)
        except Exception as exc:
            raise type(exc)(f"at t={t:.6g}: {exc}") from exc
        if k % stride == 0 or k == n_steps:
            rho, mu = _raw_grid(op.gr, r), _mu_wrap(op, m)
            if keep_snapshots or k == n_steps:
                traj.add_snapshot(t, rho, mu, observers)
            else:
                for obs in observers:
                    for name, val in obs(t, rho, mu).items():
                        traj.record(name, t, val)
    return traj


# Steady states ------------------------------------------------------------


@dataclass(frozen=True)
class GibbsResult:
    density: GridDensity
    iterations: int
    residual: float


def el_residual(phi: np.ndarray, v: np.ndarray, diff: float) -> float:
    """``sup |D log v + Φ − c|`` over occupied cells, ``c`` the v-weighted mean."""
    occ = v > 0
    g = diff * np.log(v[occ]) + phi[occ]
    c = np.sum(v[occ] * g) / np.sum(v[occ])
    return float(np.max(np.abs(g - c)))


def _gibbs(phi: np.ndarray, diff: float, h: float) -> np.ndarray:
    e = np.exp(-(phi - phi.min()) / diff)
    return e / (h * e.sum())


def gibbs_steady_state(spec: EnergySpec, species: str, opponent: Measure, grid,
                       damping: float = 0.5, tol: float = 1e-10, max_iter: int = 10_000,
                       init: Optional[GridDensity] = None) -> GibbsResult:
    """Fixed point ``v ∝ exp(−Φ[v]/D)`` for one species against a fixed opponent.

    Without self-interaction the map is explicit and one evaluation suffices.
    Otherwise iterates ``v ← (1 − θ) v + θ G(v)`` with damping θ until the
    sup-norm change drops below ``tol``.
    """
    g = GridSpec.of(grid)
    if species not in ("rho", "mu"):
        raise InvalidArgumentError("species must be 'rho' or 'mu'")
    diff = spec.alpha if species == "rho" else spec.beta
    if not diff > 0:
        raise InvalidArgumentError(f"Gibbs state of {species} needs positive diffusion")
    c = g.centers[:, None]
    op, opw = nodes(opponent)
    if species == "rho":
        kernel = spec.w1
        base = -coupling_sign(spec.mode) * spec.coupling.mean_f_z(c, op, opw) + spec.v1.value(c)
    else:
        kernel = spec.w2
        base = spec.coupling.mean_f_x(op, opw, c) + spec.v2.value(c) + extras_value(spec, c)
    if kernel.is_zero():
        v = _gibbs(base, diff, g.h)
        return GibbsResult(_raw_grid(g, v), 1, el_residual(base, v, diff))
    diffm = c - c.T
    K = kernel.value(diffm.reshape(-1, 1)).reshape(diffm.shape) * g.h
    v = _gibbs(base, diff, g.h) if init is None else np.array(init.values)
    change = np.inf
    for it in range(1, max_iter + 1):
        target = _gibbs(base + K @ v, diff, g.h)
        new = (1 - damping) * v + damping * target
        change = float(np.max(np.abs(new - v)))
        v = new
        if change < tol:
            # one undamped map so the output has exact Gibbs form for its own field
            v = _gibbs(base + K @ v, diff, g.h)
            phi = base + K @ v
            return GibbsResult(_raw_grid(g, v), it, el_residual(phi, v, diff))
    raise ConvergenceError(f"Gibbs iteration hit {max_iter} iterations, last change {change:.3g}",
                           residual=change)


def coupled_steady_state(spec: EnergySpec, rho_grid, mu_grid, damping: float = 0.5,
                         tol: float = 1e-10, max_iter: int = 10_000) -> Tuple[GridDensity, GridDensity, float]:
    """Joint fixed point for two diffusive grid species by damped Jacobi Gibbs sweeps.

    Returns ``(ρ∞, μ∞, last sup-norm change)``.
    """
    gr, gm = GridSpec.of(rho_grid), GridSpec.of(mu_grid)
    op = FvOperator(spec, gr, gm)
    if not (spec.alpha > 0 and spec.beta > 0):
        raise InvalidArgumentError("coupled Gibbs state needs alpha > 0 and beta > 0")
    vr = np.full(gr.cells, 1.0 / (gr.hi - gr.lo))
    vm = np.full(gm.cells, 1.0 / (gm.hi - gm.lo))
    change = np.inf
    for _ in range(max_iter):
        tr = _gibbs(op.phi_rho(vr, vm), spec.alpha, gr.h)
        tm = _gibbs(op.phi_mu(vr, vm), spec.beta, gm.h)
        nr = (1 - damping) * vr + damping * tr
        nm = (1 - damping) * vm + damping * tm
        change = max(float(np.max(np.abs(nr - vr))), float(np.max(np.abs(nm - vm))))
        vr, vm = nr, nm
        if change < tol:
            return _raw_grid(gr, vr / (gr.h * vr.sum())), _raw_grid(gm, vm / (gm.h * vm.sum())), change
    raise ConvergenceError(f"coupled Gibbs iteration hit {max_iter} iterations, last change {change:.3g}",
                           residual=change)
