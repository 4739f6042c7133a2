"""Game energies, first-variation gradient fields, dissipation and rate constants.

Sign convention. Write ``R(ρ) = αH(ρ) + ½∫W₁∗ρ dρ + ∫V₁ dρ`` and
``U(μ) = βH(μ) + ½∫W₂∗μ dμ + ∫V₂ dμ (+ application terms)``.
Cooperative: ``F = ∬f + R + U`` and both species descend.
Competitive: ``F = ∬f − R + U``; ρ ascends and μ descends.
In both modes the ρ velocity is ``s ∇_z∫f dμ − ∇(V₁ + W₁∗ρ + α log ρ)`` with
``s = coupling_sign(mode)``, so V₁, W₁ and entropy always act as descent terms
on ρ while the coupling flips. Every sign-sensitive caller goes through
:func:`coupling_sign`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import ExtrapolationError, InvalidArgumentError, UnsupportedRepresentationError
from .families import (
    Coupling,
    Kernel,
    NegLogGaussian,
    Potential,
    ZeroCoupling,
    ZeroKernel,
    ZeroPotential,
    _as2d,
)
from .measures import DiracState, GridDensity, Measure, ParticleEnsemble, nodes

LOG_FLOOR = 1e-300


class Mode(str, Enum):
    COOPERATIVE = "cooperative"
    COMPETITIVE = "competitive"


def coupling_sign(mode: Mode) -> float:
    """Sign of ``∇_z∫f dμ`` in the ρ velocity: +1 competitive (ascent), −1 cooperative."""
    return 1.0 if Mode(mode) is Mode.COMPETITIVE else -1.0


@dataclass(frozen=True)
class ApplicationExtras:
    """Classifier-side terms ``∫f₂ dπ + κ/2 ‖x − x₀‖²`` added to ``U``."""

    kappa: float
    x0: np.ndarray
    pi: Optional[ParticleEnsemble] = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvalidArgumentError("application kappa must be positive")
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))


@dataclass(frozen=True)
class EnergySpec:
    mode: Mode = Mode.COOPERATIVE
    coupling: Coupling = field(default_factory=ZeroCoupling)
    v1: Potential = field(default_factory=ZeroPotential)
    v2: Potential = field(default_factory=ZeroPotential)
    w1: Kernel = field(default_factory=ZeroKernel)
    w2: Kernel = field(default_factory=ZeroKernel)
    alpha: float = 0.0
    beta: float = 0.0
    extras: Optional[ApplicationExtras] = None
    dim_rho: int = 1
    dim_mu: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgumentError("alpha and beta must be nonnegative")
        if self.extras is not None and self.extras.x0.size != self.dim_mu:
            raise InvalidArgumentError("application x0 must have dimension dim_mu")

    @property
    def sign(self) -> float:
        return coupling_sign(self.mode)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode.value,
            "alpha": self.alpha,
            "beta": self.beta,
            "dim_rho": self.dim_rho,
            "dim_mu": self.dim_mu,
            "coupling": self.coupling.to_dict(),
            "v1": self.v1.to_dict(),
            "v2": self.v2.to_dict(),
            "w1": self.w1.to_dict(),
            "w2": self.w2.to_dict(),
        }
        if self.extras is not None:
            out["extras"] = {
                "kappa": self.extras.kappa,
                "x0": self.extras.x0.tolist(),
                "pi_size": None if self.extras.pi is None else self.extras.pi.size,
            }
        return out


@dataclass(frozen=True)
class RateConstants:
    lambda_a: Optional[float] = None
    lambda_c: Optional[float] = None
    lambda_b: Optional[float] = None
    lambda_d: Optional[float] = None
    #: rate contributed by the reference term alone, α times the convexity of −log ρ̃
    kl_rate: Optional[float] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# Helpers ------------------------------------------------------------------


def entropy(m: Measure) -> float:
    """``h Σ v log v`` over cells with ``v > 0``."""
    if not isinstance(m, GridDensity):
        raise UnsupportedRepresentationError(
            f"entropy needs a GridDensity, got {type(m).__name__}"
        )
    v = m.values[m.values > 0]
    return float(m.h * np.sum(v * np.log(v)))


def grad_log_density(g: GridDensity, at) -> np.ndarray:
    """``∇ log ρ`` from central differences at cell centers, interpolated linearly."""
    at = _as2d(at)
    if at.shape[1] != 1:
        raise InvalidArgumentError("grid densities are 1D")
    if np.any(at[:, 0] < g.lo) or np.any(at[:, 0] > g.hi):
        bad = at[(at[:, 0] < g.lo) | (at[:, 0] > g.hi), 0][0]
        raise ExtrapolationError(f"query point {bad!r} outside grid [{g.lo}, {g.hi}]")
    dl = grad_log_centers(g)
    return np.interp(at[:, 0], g.centers, dl)[:, None]


def grad_log_centers(g: GridDensity) -> np.ndarray:
    lv = np.log(np.maximum(g.values, LOG_FLOOR))
    if g.cells < 2:
        return np.zeros(1)
    dl = np.empty(g.cells)
    dl[1:-1] = (lv[2:] - lv[:-2]) / (2 * g.h)
    dl[0] = (lv[1] - lv[0]) / g.h
    dl[-1] = (lv[-1] - lv[-2]) / g.h
    return dl


def _require_entropy_repr(m: Measure, coef: float, who: str):
    if coef > 0 and not isinstance(m, GridDensity):
        raise UnsupportedRepresentationError(
            f"{who} has positive diffusion; its entropy needs a GridDensity, got {type(m).__name__}"
        )


def extras_value(spec: EnergySpec, x) -> np.ndarray:
    """``∫f₂(z', x) dπ(z') + κ/2 ‖x − x₀‖²`` at each ``x``."""
    x = _as2d(x)
    ex = spec.extras
    if ex is None:
        return np.zeros(x.shape[0])
    out = 0.5 * ex.kappa * np.sum((x - ex.x0) ** 2, axis=1)
    if ex.pi is not None:
        out = out + spec.coupling.mean_f_x(ex.pi.points, ex.pi.weights, x, second=True)
    return out


def extras_grad(spec: EnergySpec, x) -> np.ndarray:
    x = _as2d(x)
    ex = spec.extras
    if ex is None:
        return np.zeros_like(x)
    out = ex.kappa * (x - ex.x0)
    if ex.pi is not None:
        out = out + spec.coupling.mean_grad_x(ex.pi.points, ex.pi.weights, x, second=True)
    return out


def extras_hess(spec: EnergySpec, x) -> np.ndarray:
    x = _as2d(x)
    ex = spec.extras
    d = x.shape[1]
    if ex is None:
        return np.zeros((x.shape[0], d, d))
    out = np.broadcast_to(ex.kappa * np.eye(d), (x.shape[0], d, d)).copy()
    if ex.pi is not None:
        out = out + spec.coupling.mean_hess_xx(ex.pi.points, ex.pi.weights, x, second=True)
    return out


# Energy -------------------------------------------------------------------


def energy_parts(spec: EnergySpec, rho: Measure, mu: Measure) -> dict:
    """Individual terms: coupling ``∬f``, ``R(ρ)`` and ``U(μ)``."""
    _require_entropy_repr(rho, spec.alpha, "rho")
    _require_entropy_repr(mu, spec.beta, "mu")
    rp, rw = nodes(rho)
    mp, mw = nodes(mu)
    coup = float(rw @ spec.coupling.mean_f_z(rp, mp, mw))
    r_term = float(rw @ spec.v1.value(rp))
    if not spec.w1.is_zero():
        r_term += 0.5 * float(rw @ spec.w1.conv_value(rp, rp, rw))
    if spec.alpha > 0:
        r_term += spec.alpha * entropy(rho)
    u_term = float(mw @ spec.v2.value(mp)) + float(mw @ extras_value(spec, mp))
    if not spec.w2.is_zero():
        u_term += 0.5 * float(mw @ spec.w2.conv_value(mp, mp, mw))
    if spec.beta > 0:
        u_term += spec.beta * entropy(mu)
    return {"coupling": coup, "R": r_term, "U": u_term}


def eval_energy(spec: EnergySpec, rho: Measure, mu: Measure) -> float:
    """``F_a`` (cooperative) or ``F_c`` (competitive) at ``(ρ, μ)``.

    Entropy terms require grid densities; all integrals use the measure's own
    nodes (cell centers for grids), and convolutions are direct double sums.
    """
    p = energy_parts(spec, rho, mu)
    if spec.mode is Mode.COOPERATIVE:
        return p["coupling"] + p["R"] + p["U"]
    return p["coupling"] - p["R"] + p["U"]


# Gradient fields ----------------------------------------------------------


def _rho_descent_terms(spec, rho, at):
    """``∇V₁ + ∇W₁∗ρ + α∇log ρ`` (entropy only for grids)."""
    rp, rw = nodes(rho)
    out = spec.v1.grad(at) + spec.w1.conv_grad(at, rp, rw)
    if spec.alpha > 0 and isinstance(rho, GridDensity):
        out = out + spec.alpha * grad_log_density(rho, at)
    return out


def _mu_descent_terms(spec, mu, at):
    mp, mw = nodes(mu)
    out = spec.v2.grad(at) + spec.w2.conv_grad(at, mp, mw) + extras_grad(spec, at)
    if spec.beta > 0 and isinstance(mu, GridDensity):
        out = out + spec.beta * grad_log_density(mu, at)
    return out


def grad_field_rho(spec: EnergySpec, rho: Measure, mu: Measure, at) -> np.ndarray:
    """``∇_z δ_ρ F[ρ, μ]`` at ``at``.

    Cooperative: ``∇∫f dμ + (∇V₁ + ∇W₁∗ρ + α∇log ρ)``. Competitive: the bracket
    enters with a minus sign. The entropy term is omitted for particle ensembles;
    the integrator realizes it as Brownian noise.
    """
    at = _as2d(at)
    mp, mw = nodes(mu)
    coup = spec.coupling.mean_grad_z(at, mp, mw)
    rest = _rho_descent_terms(spec, rho, at)
    if spec.mode is Mode.COOPERATIVE:
        return coup + rest
    return coup - rest


def grad_field_mu(spec: EnergySpec, rho: Measure, mu: Measure, at) -> np.ndarray:
    """``∇_x δ_μ F[ρ, μ]`` at ``at``; μ always descends this field."""
    at = _as2d(at)
    rp, rw = nodes(rho)
    return spec.coupling.mean_grad_x(rp, rw, at) + _mu_descent_terms(spec, mu, at)


def rho_velocity(spec: EnergySpec, rho: Measure, mu: Measure, at) -> np.ndarray:
    """Velocity of the ρ species: ``+∇δ_ρF`` when competitive, ``−∇δ_ρF`` when cooperative."""
    return coupling_sign(spec.mode) * grad_field_rho(spec, rho, mu, at)


def mu_velocity(spec: EnergySpec, rho: Measure, mu: Measure, at) -> np.ndarray:
    return -grad_field_mu(spec, rho, mu, at)


def rho_potential(spec: EnergySpec, rho: Measure, mu: Measure, at) -> np.ndarray:
    """Potential ``Φ_ρ`` with ρ velocity ``−∇(Φ_ρ + α log ρ)``."""
    at = _as2d(at)
    rp, rw = nodes(rho)
    mp, mw = nodes(mu)
    phi = -coupling_sign(spec.mode) * spec.coupling.mean_f_z(at, mp, mw) + spec.v1.value(at)
    if not spec.w1.is_zero():
        phi = phi + spec.w1.conv_value(at, rp, rw)
    return phi


def mu_potential(spec: EnergySpec, rho: Measure, mu: Measure, at) -> np.ndarray:
    """Potential ``Φ_μ`` with μ velocity ``−∇(Φ_μ + β log μ)``."""
    at = _as2d(at)
    rp, rw = nodes(rho)
    mp, mw = nodes(mu)
    phi = spec.coupling.mean_f_x(rp, rw, at) + spec.v2.value(at) + extras_value(spec, at)
    if not spec.w2.is_zero():
        phi = phi + spec.w2.conv_value(at, mp, mw)
    return phi


def dissipation_parts(spec: EnergySpec, rho: Measure, mu: Measure):
    """``(∫‖∇δ_ρF‖² dρ, ∫‖∇δ_μF‖² dμ)``."""
    _require_entropy_repr(rho, spec.alpha, "rho")
    _require_entropy_repr(mu, spec.beta, "mu")
    rp, rw = nodes(rho)
    mp, mw = nodes(mu)
    g_r = grad_field_rho(spec, rho, mu, rp)
    g_m = grad_field_mu(spec, rho, mu, mp)
    return float(rw @ np.sum(g_r**2, axis=1)), float(mw @ np.sum(g_m**2, axis=1))


def dissipation(spec: EnergySpec, rho: Measure, mu: Measure) -> float:
    """``D(γ) = ∫‖∇δ_ρF‖² dρ + ∫‖∇δ_μF‖² dμ``; nonnegative."""
    a, b = dissipation_parts(spec, rho, mu)
    return a + b


# Constants ----------------------------------------------------------------


def _lambda_v2_effective(spec: EnergySpec) -> Optional[float]:
    lam = spec.v2.lam
    if lam is None:
        return None
    ex = spec.extras
    if ex is None:
        return lam
    lam = lam + ex.kappa
    if ex.pi is not None:
        if spec.coupling.lambda2 is None:
            return None
        lam = lam + spec.coupling.lambda2
    return lam


def _add(*vals):
    if any(v is None for v in vals):
        return None
    return float(sum(vals))


def rate_constants(spec: EnergySpec) -> RateConstants:
    """Theoretical rates from the analytic family constants.

    ``λ_a = λ_f + min(λ_V1, λ_V2)`` (cooperative), ``λ_c = min(λ_f1 + λ_V1,
    λ_f2 + λ_V2)`` (competitive), and for specs with application terms
    ``λ_b = αλ̃ − Λ₁`` and ``λ_d = κ + λ₁ + λ₂ (+ λ_V2)``. Application terms
    fold into the effective V₂ convexity. A rate is ``None`` when any input is.
    """
    c = spec.coupling
    lv1, lv2 = spec.v1.lam, _lambda_v2_effective(spec)
    la = lc = lb = ld = None
    if spec.mode is Mode.COOPERATIVE:
        if None not in (c.lambda_f, lv1, lv2):
            la = float(c.lambda_f + min(lv1, lv2))
    else:
        t1, t2 = _add(c.lambda_f1, lv1), _add(c.lambda_f2, lv2)
        if None not in (t1, t2):
            lc = min(t1, t2)
        if spec.extras is not None:
            if c.Lambda1 is not None and lv1 is not None:
                lb = float(lv1 - c.Lambda1)
            ld = _add(spec.extras.kappa, c.lambda1,
                      c.lambda2 if spec.extras.pi is not None else 0.0, spec.v2.lam)
    kl = spec.v1.lam if isinstance(spec.v1, NegLogGaussian) else None
    return RateConstants(la, lc, lb, ld, kl)


def best_response_bound(spec: EnergySpec) -> Optional[float]:
    """``‖x₀‖² + 2(a₁ + a₂)/κ`` when the constants exist."""
    ex = spec.extras
    if ex is None:
        return None
    a1 = spec.coupling.a1
    a2 = spec.coupling.a2 if ex.pi is not None else 0.0
    if a1 is None or a2 is None:
        return None
    return float(ex.x0 @ ex.x0 + 2.0 * (a1 + a2) / ex.kappa)


def _maximize(fun, grad, x0):
    res = minimize(lambda x: -fun(x), x0, jac=lambda x: -grad(x), method="BFGS",
                   options={"gtol": 1e-12, "maxiter": 1000})
    return -float(res.fun)


def second_moment_constant(spec: EnergySpec) -> Optional[dict]:
    """Constants of the uniform second-moment bound for competitive specs.

    ``c = V₁(0) + V₂(0) + max_z[f(z,0) − V₁(z)] + max_x[−f(0,x) − V₂(x)]``,
    ``ĉ = c + α d₁ + β d₂`` and the bound is ``max(initial, 2ĉ/λ_c)``. Application
    terms are part of V₂. Returns ``None`` unless ``λ_c > 0``.
    """
    if spec.mode is not Mode.COMPETITIVE:
        return None
    lc = rate_constants(spec).lambda_c
    if lc is None or lc <= 0:
        return None
    d1, d2 = spec.dim_rho, spec.dim_mu
    z0, x0 = np.zeros((1, d1)), np.zeros((1, d2))
    cp = spec.coupling

    def v2v(x):
        x = _as2d(x)
        return spec.v2.value(x) + extras_value(spec, x)

    def v2g(x):
        x = _as2d(x)
        return spec.v2.grad(x) + extras_grad(spec, x)

    fz = lambda z: float(cp.f(z[None], x0)[0, 0] - spec.v1.value(z[None])[0])
    gz = lambda z: cp.grad_z(z[None], x0)[0, 0] - spec.v1.grad(z[None])[0]
    fx = lambda x: float(-cp.f(z0, x[None])[0, 0] - v2v(x[None])[0])
    gx = lambda x: -cp.grad_x(z0, x[None])[0, 0] - v2g(x[None])[0]
    mz = _maximize(fz, gz, np.zeros(d1))
    mx = _maximize(fx, gx, np.zeros(d2))
    c = float(spec.v1.value(z0)[0] + v2v(x0)[0] + mz + mx)
    c_hat = c + spec.alpha * d1 + spec.beta * d2
    return {"c": c, "c_hat": c_hat, "lambda_c": lc, "ball": 2.0 * c_hat / lc}
