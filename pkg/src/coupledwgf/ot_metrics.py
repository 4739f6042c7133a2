"""Wasserstein-2 distances, the joint metric W̄, and exponential rate fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidArgumentError, InvalidSeriesError, UnsupportedRepresentationError
from .measures import DiracState, GridDensity, Measure, ParticleEnsemble

ASSIGNMENT_MAX_N = 512


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    r_squared: float
    window: Tuple[float, float]
    n_points: int

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "n_points": self.n_points,
        }


def _quantile_pieces(m: Measure):
    """Quantile function as pieces ``Q(s) = q_k + slope_k (s − s_k)`` on ``[s_k, s_{k+1}]``."""
    if isinstance(m, GridDensity):
        mass = m.masses
        keep = mass > 0
        s = np.concatenate([[0.0], np.cumsum(mass[keep])])
        s[-1] = 1.0
        left = m.edges[:-1][keep]
        slope = m.h / mass[keep]
        return s, left, slope
    if isinstance(m, ParticleEnsemble):
        if m.dim != 1:
            raise InvalidArgumentError("w2_1d needs one-dimensional measures")
        order = np.argsort(m.points[:, 0], kind="stable")
        s = np.concatenate([[0.0], np.cumsum(m.weights[order])])
        s[-1] = 1.0
        return s, m.points[order, 0], np.zeros(m.size)
    if isinstance(m, DiracState):
        if m.dim != 1:
            raise InvalidArgumentError("w2_1d needs one-dimensional measures")
        return np.array([0.0, 1.0]), m.point.copy(), np.zeros(1)
    raise InvalidArgumentError(f"not a measure: {type(m).__name__}")


def _cell_width(m: Measure) -> float:
    return m.h if isinstance(m, GridDensity) else 0.0


def _piece_value(q, k, s, h, i, at):
    return q[i] + np.minimum(k[i] * np.maximum(at - s[i], 0.0), h)


def w2_1d(a: Measure, b: Measure) -> float:
    """Exact 1D W₂ from quantile functions.

    Grid quantiles are piecewise linear (linear CDF within each cell) and
    ensemble quantiles piecewise constant, so ``∫₀¹ |Q_a − Q_b|² ds`` is
    integrated exactly over the merged breakpoints.
    """
    if (isinstance(a, ParticleEnsemble) and isinstance(b, ParticleEnsemble)
            and a.dim == 1 and b.dim == 1 and a.size == b.size
            and a.is_equal_weight() and b.is_equal_weight()):
        d = np.sort(a.points[:, 0]) - np.sort(b.points[:, 0])
        return float(np.sqrt(np.mean(d * d)))
    sa, qa, ka = _quantile_pieces(a)
    sb, qb, kb = _quantile_pieces(b)
    s = np.union1d(sa, sb)
    width = np.diff(s)
    lo = s[:-1]
    keep = width > 0
    lo, width = lo[keep], width[keep]
    mid = lo + 0.5 * width
    ia = np.clip(np.searchsorted(sa, mid, side="right") - 1, 0, qa.size - 1)
    ib = np.clip(np.searchsorted(sb, mid, side="right") - 1, 0, qb.size - 1)
    hi = lo + width
    ha, hb = _cell_width(a), _cell_width(b)
    # endpoint values clipped to the cell so near-empty cells cannot blow up under roundoff
    da = _piece_value(qa, ka, sa, ha, ia, lo) - _piece_value(qb, kb, sb, hb, ib, lo)
    dc = _piece_value(qa, ka, sa, ha, ia, hi) - _piece_value(qb, kb, sb, hb, ib, hi)
    total = np.sum(width * (da * da + da * dc + dc * dc) / 3.0)
    return float(np.sqrt(max(total, 0.0)))


def w2_assignment(a: ParticleEnsemble, b: ParticleEnsemble) -> float:
    """Exact W₂ between equal-size, equal-weight ensembles by optimal assignment."""
    if not (isinstance(a, ParticleEnsemble) and isinstance(b, ParticleEnsemble)):
        raise UnsupportedRepresentationError("w2_assignment needs two ParticleEnsembles")
    if a.size != b.size or not (a.is_equal_weight() and b.is_equal_weight()):
        raise UnsupportedRepresentationError("w2_assignment needs equal counts and equal weights")
    if a.dim != b.dim:
        raise InvalidArgumentError("dimension mismatch")
    if a.size > ASSIGNMENT_MAX_N:
        raise UnsupportedRepresentationError(f"w2_assignment supports N <= {ASSIGNMENT_MAX_N}")
    cost = np.sum((a.points[:, None, :] - b.points[None, :, :]) ** 2, axis=2)
    r, c = linear_sum_assignment(cost)
    return float(np.sqrt(cost[r, c].sum() / a.size))


def w2(a: Measure, b: Measure) -> float:
    """W₂ for any supported pair of representations."""
    if a.dim != b.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if isinstance(a, DiracState) and isinstance(b, DiracState):
        return float(np.linalg.norm(a.point - b.point))
    if a.dim == 1:
        return w2_1d(a, b)
    if isinstance(a, DiracState) or isinstance(b, DiracState):
        p, m = (a, b) if isinstance(a, DiracState) else (b, a)
        return float(np.sqrt(m.weights @ np.sum((m.points - p.point) ** 2, axis=1)))
    return w2_assignment(a, b)


def wbar(rho_pair, mu_pair) -> float:
    """Joint metric ``√(W₂(ρ, ρ′)² + W₂(μ, μ′)²)``."""
    r = w2(*rho_pair)
    m = w2(*mu_pair)
    return float(np.hypot(r, m))


def default_window(t: np.ndarray) -> Tuple[float, float]:
    """Drop the first 10% of the horizon."""
    t0, t1 = float(t[0]), float(t[-1])
    return (t0 + 0.1 * (t1 - t0), t1)


def fit_rate(t: Sequence[float], v: Sequence[float],
             window: Optional[Tuple[float, float]] = None) -> RateFit:
    """Least-squares fit of ``log v ≈ intercept − rate · t`` inside ``window``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise InvalidSeriesError("t and v must be 1D arrays of equal length")
    if t.size == 0:
        raise InvalidSeriesError("empty series")
    if window is None:
        window = default_window(t)
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    ts, vs = t[sel], v[sel]
    if ts.size < 3:
        raise InvalidSeriesError(f"need at least 3 points in window {window}, got {ts.size}")
    if np.any(~np.isfinite(vs)) or np.any(vs <= 0):
        raise InvalidSeriesError("series has nonpositive or non-finite values in the window")
    y = np.log(vs)
    X = np.column_stack([np.ones_like(ts), ts])
    (c0, c1), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - (c0 + c1 * ts)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(np.sum(y * y))) else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(float(-c1), float(c0), float(min(r2, 1.0)),
                   (float(window[0]), float(window[1])), int(ts.size))
