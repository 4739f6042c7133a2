"""Euler–Maruyama integrator for the interacting particle system.

One step moves every ρ particle by

    z ← z + dt [s (1/N_x) Σ_j ∇_z f(z, x_j) − (1/N_z) Σ_k ∇W₁(z − z_k) − ∇V₁(z)] + √(2α dt) ξ

with ``s = coupling_sign(mode)``, and every μ particle by the descent step on
``∇_x δ_μ F``. Drifts of both species are taken from the same time level and
noise is added after the drift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .energy import EnergySpec, coupling_sign, extras_grad
from .errors import DivergenceError, InvalidArgumentError, StabilityError
from .measures import DiracState, ParticleEnsemble, nodes
from .trajectory import Observer, Trajectory, step_schedule


@dataclass(frozen=True)
class StepConfig:
    dt: float
    freeze_rho: bool = False
    freeze_mu: bool = False
    #: number of ρ steps per μ step
    mu_every: int = 1
    #: μ step size; defaults to dt
    mu_dt: Optional[float] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")
        if self.mu_every < 1:
            raise InvalidArgumentError("mu_every must be at least 1")
        if self.mu_dt is not None and not self.mu_dt > 0:
            raise InvalidArgumentError("mu_dt must be positive")

    @property
    def mu_step(self) -> float:
        return self.dt if self.mu_dt is None else self.mu_dt


@dataclass(frozen=True)
class SimState:
    rho: ParticleEnsemble
    mu: Union[ParticleEnsemble, DiracState]
    time: float = 0.0
    #: advanced in place by :func:`step`; the caller owns the state between steps
    rng: Optional[np.random.Generator] = None
    steps: int = 0

    @classmethod
    def initial(cls, rho, mu, seed: int, time: float = 0.0) -> "SimState":
        return cls(rho, mu, time, np.random.default_rng(seed), 0)


def stability_bound(spec: EnergySpec) -> float:
    """``0.5 / max(available upper curvature constants, 1)``."""
    c = spec.coupling
    vals = [spec.v1.Lam, spec.v2.Lam, spec.w1.Lam, spec.w2.Lam, c.Lambda1, c.L]
    if spec.extras is not None:
        vals.append(spec.extras.kappa)
    vals = [abs(v) for v in vals if v is not None]
    return 0.5 / max(vals + [1.0])


def _checked(name: str, species: str, arr: np.ndarray) -> np.ndarray:
    bad = ~np.all(np.isfinite(arr), axis=1)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DivergenceError(f"non-finite {name} term for {species} particle {i}")
    return arr


def _rho_drift(spec, z, rw, mp, mw):
    s = coupling_sign(spec.mode)
    coup = _checked("coupling", "rho", s * spec.coupling.mean_grad_z(z, mp, mw))
    kern = _checked("interaction", "rho", -spec.w1.conv_grad(z, z, rw))
    pot = _checked("potential", "rho", -spec.v1.grad(z))
    return coup + kern + pot


def _mu_drift(spec, x, wx, rp, rw):
    coup = _checked("coupling", "mu", -spec.coupling.mean_grad_x(rp, rw, x))
    kern = _checked("interaction", "mu", -spec.w2.conv_grad(x, x, wx))
    pot = _checked("potential", "mu", -spec.v2.grad(x) - extras_grad(spec, x))
    return coup + kern + pot


def check_stability(spec: EnergySpec, cfg: StepConfig) -> None:
    lim = stability_bound(spec)
    for name, dt in (("dt", cfg.dt), ("mu_dt", cfg.mu_step)):
        if dt > lim * (1 + 1e-12):
            raise StabilityError(f"{name}={dt} exceeds the stability bound {lim:.6g}")


def step(spec: EnergySpec, state: SimState, cfg: StepConfig) -> SimState:
    """Advance one Euler–Maruyama step. Deterministic given the state's generator."""
    check_stability(spec, cfg)
    if state.rng is None:
        raise InvalidArgumentError("SimState needs a random generator; use SimState.initial")
    rp, rw = nodes(state.rho)
    mp, mw = nodes(state.mu)
    dt, dtm = cfg.dt, cfg.mu_step
    move_mu = not cfg.freeze_mu and state.steps % cfg.mu_every == 0
    new_z = rp
    new_x = mp
    if not cfg.freeze_rho:
        new_z = rp + dt * _rho_drift(spec, rp, rw, mp, mw)
    if move_mu:
        if isinstance(state.mu, DiracState) and spec.beta > 0:
            raise InvalidArgumentError("a moving Dirac mu requires beta = 0")
        new_x = mp + dtm * _mu_drift(spec, mp, mw, rp, rw)
    if not cfg.freeze_rho and spec.alpha > 0:
        new_z = new_z + np.sqrt(2 * spec.alpha * dt) * state.rng.standard_normal(rp.shape)
    if move_mu and spec.beta > 0:
        new_x = new_x + np.sqrt(2 * spec.beta * dtm) * state.rng.standard_normal(mp.shape)
    _checked("updated position", "rho", new_z)
    _checked("updated position", "mu", new_x)
    rho = state.rho if new_z is rp else state.rho.with_points(new_z)
    if new_x is mp:
        mu = state.mu
    elif isinstance(state.mu, DiracState):
        mu = DiracState(new_x[0])
    else:
        mu = state.mu.with_points(new_x)
    return SimState(rho, mu, state.time + dt, state.rng, state.steps + 1)


def simulate(spec: EnergySpec, state0: SimState, cfg: StepConfig, t_end: float,
             observers: Sequence[Observer] = (), snapshot_every: Optional[float] = None,
             keep_snapshots: bool = True) -> Trajectory:
    """Integrate to ``t_end`` and record snapshots plus observer channels."""
    if not t_end > state0.time:
        raise InvalidArgumentError("t_end must exceed the initial time")
    check_stability(spec, cfg)
    n_steps, stride = step_schedule(state0.time, t_end, cfg.dt, snapshot_every)
    traj = Trajectory(meta={"solver": "particles", "dt": cfg.dt, "n_rho": state0.rho.size})
    traj.add_snapshot(state0.time, state0.rho, state0.mu, observers)
    st = state0
    for k in range(1, n_steps + 1):
        try:
            st = step(spec, st, cfg)
        except Exception as exc:
            raise type(exc)(f"at t={st.time + cfg.dt:.6g}: {exc}") from exc
        if k % stride == 0 or k == n_steps:
            if keep_snapshots or k == n_steps:
                traj.add_snapshot(st.time, st.rho, st.mu, observers)
            else:
                for obs in observers:
                    for name, val in obs(st.time, st.rho, st.mu).items():
                        traj.record(name, st.time, val)
    traj.meta["final_state"] = st
    return traj
