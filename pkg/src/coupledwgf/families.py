"""Closed library of potential, coupling and interaction-kernel families.

Every family evaluates values and derivatives analytically and reports its
Hessian bounds as exact fields. A bound a family cannot guarantee is ``None``.

Array conventions: single-variable functions take ``z`` of shape ``(N, d)``.
Couplings take ``z (N, d1)`` and ``x (M, d2)`` and return pairwise arrays with
leading shape ``(N, M)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from typing import ClassVar, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import cdist

from .errors import ConfigError, InvalidArgumentError

# max |σ''(u)| for the logistic sigmoid, attained at σ = (3 ± √3)/6
SIGMOID_D2_MAX = 1.0 / (6.0 * np.sqrt(3.0))
# max |d²/du² tanh u| = max |2 sech²u tanh u|
TANH_D2_MAX = 4.0 / (3.0 * np.sqrt(3.0))

_PAIR_BUDGET = 2_000_000


def _as2d(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    return z


def sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def _x_sech2_max() -> float:
    # max_x x sech²x solves 2x tanh x = 1
    x = brentq(lambda t: 2 * t * np.tanh(t) - 1.0, 0.1, 2.0, xtol=1e-15)
    return float(x / np.cosh(x) ** 2)


X_SECH2_MAX = _x_sech2_max()


def _sym_matrix(value, dim: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        a = a * np.eye(dim)
    elif a.ndim == 1:
        a = np.diag(a)
    if a.shape != (dim, dim):
        raise InvalidArgumentError(f"{name} must be scalar, length-{dim} or {dim}x{dim}")
    if not np.allclose(a, a.T, atol=0, rtol=1e-14):
        raise InvalidArgumentError(f"{name} must be symmetric")
    return 0.5 * (a + a.T)


class _Family:
    kind: ClassVar[str]
    name: ClassVar[str]

    def to_dict(self) -> dict:
        out = {"family": self.name}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


# Potentials ---------------------------------------------------------------


class Potential(_Family):
    kind = "potential"
    lam: Optional[float] = None
    Lam: Optional[float] = None

    def value(self, z):
        raise NotImplementedError

    def grad(self, z):
        raise NotImplementedError

    def hess(self, z):
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroPotential(Potential):
    name: ClassVar[str] = "zero"

    def value(self, z):
        return np.zeros(_as2d(z).shape[0])

    def grad(self, z):
        return np.zeros_like(_as2d(z))

    def hess(self, z):
        z = _as2d(z)
        return np.zeros((z.shape[0], z.shape[1], z.shape[1]))

    @property
    def lam(self):
        return 0.0

    @property
    def Lam(self):
        return 0.0


@dataclass(frozen=True)
class QuadraticPotential(Potential):
    """``V(z) = ½ (z − c)ᵀ A (z − c)``."""

    name: ClassVar[str] = "quadratic"
    center: np.ndarray = field(default_factory=lambda: np.zeros(1))
    curvature: np.ndarray = field(default_factory=lambda: np.eye(1))

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "curvature", _sym_matrix(self.curvature, c.size, "curvature"))

    def value(self, z):
        y = _as2d(z) - self.center
        return 0.5 * np.einsum("ni,ij,nj->n", y, self.curvature, y)

    def grad(self, z):
        return (_as2d(z) - self.center) @ self.curvature

    def hess(self, z):
        return np.broadcast_to(self.curvature, (_as2d(z).shape[0],) + self.curvature.shape).copy()

    @cached_property
    def _eig(self):
        return np.linalg.eigvalsh(self.curvature)

    @property
    def lam(self):
        return float(self._eig[0])

    @property
    def Lam(self):
        return float(self._eig[-1])


@dataclass(frozen=True)
class NegLogGaussian(Potential):
    """``V(z) = −scale · log N(z; mean, diag(cov_diag))``, normalizing constant included."""

    name: ClassVar[str] = "neg_log_gaussian"
    mean: np.ndarray = field(default_factory=lambda: np.zeros(1))
    cov_diag: np.ndarray = field(default_factory=lambda: np.ones(1))
    scale: float = 1.0

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        s = np.atleast_1d(np.asarray(self.cov_diag, dtype=float))
        if s.shape != m.shape or np.any(s <= 0) or self.scale <= 0:
            raise InvalidArgumentError("neg_log_gaussian needs matching cov_diag > 0 and scale > 0")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov_diag", s)
        object.__setattr__(self, "scale", float(self.scale))

    def value(self, z):
        y = _as2d(z) - self.mean
        quad = 0.5 * np.sum(y**2 / self.cov_diag, axis=1)
        return self.scale * (quad + 0.5 * np.sum(np.log(2 * np.pi * self.cov_diag)))

    def grad(self, z):
        return self.scale * (_as2d(z) - self.mean) / self.cov_diag

    def hess(self, z):
        n = _as2d(z).shape[0]
        return np.broadcast_to(np.diag(self.scale / self.cov_diag), (n, self.mean.size, self.mean.size)).copy()

    @property
    def lam(self):
        return float(self.scale / self.cov_diag.max())

    @property
    def Lam(self):
        return float(self.scale / self.cov_diag.min())

    @property
    def reference_lambda(self) -> float:
        """Lower Hessian bound of ``−log ρ̃`` (without the scale)."""
        return float(1.0 / self.cov_diag.max())


@dataclass(frozen=True)
class LogisticLoss(Potential):
    """``V(z) = sign · σ(a (n·z − center)) + tilt · n·z`` with unit direction ``n``."""

    name: ClassVar[str] = "logistic_loss"
    a: float = 1.0
    sign: float = 1.0
    tilt: float = 0.0
    center: float = 0.0
    direction: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.a <= 0:
            raise InvalidArgumentError("logistic_loss needs a > 0")
        if self.sign not in (1, -1, 1.0, -1.0):
            raise InvalidArgumentError("logistic_loss sign must be +1 or -1")
        if self.direction is not None:
            n = np.atleast_1d(np.asarray(self.direction, dtype=float))
            object.__setattr__(self, "direction", n / np.linalg.norm(n))

    def _n(self, d):
        if self.direction is not None:
            return self.direction
        return np.ones(d) / np.sqrt(d)

    def _u(self, z):
        z = _as2d(z)
        n = self._n(z.shape[1])
        return z, n, self.a * (z @ n - self.center)

    def value(self, z):
        z, n, u = self._u(z)
        return self.sign * sigmoid(u) + self.tilt * (z @ n)

    def grad(self, z):
        z, n, u = self._u(z)
        s = sigmoid(u)
        return (self.sign * self.a * s * (1 - s) + self.tilt)[:, None] * n

    def hess(self, z):
        z, n, u = self._u(z)
        s = sigmoid(u)
        d2 = self.sign * self.a**2 * s * (1 - s) * (1 - 2 * s)
        return d2[:, None, None] * np.outer(n, n)

    @property
    def lam(self):
        return -self.a**2 * SIGMOID_D2_MAX

    @property
    def Lam(self):
        return self.a**2 * SIGMOID_D2_MAX


# Couplings ----------------------------------------------------------------


class Coupling(_Family):
    """Coupling ``f(z, x)``; ``f2`` is the label-1 loss paired with a fixed population.

    Constant fields:
      lambda_f   joint Hessian lower bound (cooperative setting)
      lambda_f1  lower bound of −∇²_z f (concavity in z)
      lambda_f2  lower bound of ∇²_x f (convexity in x); also λ₁ of the application
      Lambda1    upper bound of ∇²_z f
      lambda2    lower bound of ∇²_x f2
      L          bound on ‖∇²_xz f‖₂
      a1, a2     constants with x·∇_x f_i ≥ −a_i
    """

    kind = "coupling"

    def f(self, z, x):
        raise NotImplementedError

    def grad_z(self, z, x):
        raise NotImplementedError

    def grad_x(self, z, x):
        raise NotImplementedError

    def hess_xx(self, z, x):
        raise NotImplementedError

    # label-1 loss; zero unless the family defines it
    def f2(self, z, x):
        return np.zeros((_as2d(z).shape[0], _as2d(x).shape[0]))

    def grad_x2(self, z, x):
        z, x = _as2d(z), _as2d(x)
        return np.zeros((z.shape[0], x.shape[0], x.shape[1]))

    def hess_xx2(self, z, x):
        z, x = _as2d(z), _as2d(x)
        return np.zeros((z.shape[0], x.shape[0], x.shape[1], x.shape[1]))

    has_f2: ClassVar[bool] = False

    # Weighted reductions. Chunked over the first argument so memory stays bounded.
    @staticmethod
    def _chunks(n_outer, n_inner):
        step = max(1, _PAIR_BUDGET // max(n_inner, 1))
        return range(0, n_outer, step), step

    def mean_f_z(self, z, xs, wx):
        """``Σ_m wx_m f(z_n, x_m)`` for each ``z_n``."""
        z, xs = _as2d(z), _as2d(xs)
        out = np.empty(z.shape[0])
        rng, step = self._chunks(z.shape[0], xs.shape[0])
        for s in rng:
            out[s:s + step] = self.f(z[s:s + step], xs) @ wx
        return out

    def mean_f_x(self, zs, wz, x, second=False):
        """``Σ_n wz_n f(z_n, x_m)`` for each ``x_m`` (``f2`` if ``second``)."""
        zs, x = _as2d(zs), _as2d(x)
        fn = self.f2 if second else self.f
        out = np.empty(x.shape[0])
        rng, step = self._chunks(x.shape[0], zs.shape[0])
        for s in rng:
            out[s:s + step] = wz @ fn(zs, x[s:s + step])
        return out

    def mean_grad_z(self, z, xs, wx):
        z, xs = _as2d(z), _as2d(xs)
        out = np.empty_like(z)
        rng, step = self._chunks(z.shape[0], xs.shape[0])
        for s in rng:
            out[s:s + step] = np.einsum("nmd,m->nd", self.grad_z(z[s:s + step], xs), wx)
        return out

    def mean_grad_x(self, zs, wz, x, second=False):
        zs, x = _as2d(zs), _as2d(x)
        fn = self.grad_x2 if second else self.grad_x
        out = np.empty_like(x)
        rng, step = self._chunks(x.shape[0], zs.shape[0])
        for s in rng:
            out[s:s + step] = np.einsum("nmd,n->md", fn(zs, x[s:s + step]), wz)
        return out

    def mean_hess_xx(self, zs, wz, x, second=False):
        fn = self.hess_xx2 if second else self.hess_xx
        return np.einsum("nmij,n->mij", fn(_as2d(zs), _as2d(x)), wz)

    lambda_f: Optional[float] = None
    lambda_f1: Optional[float] = None
    lambda_f2: Optional[float] = None
    Lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    L: Optional[float] = None
    a1: Optional[float] = None
    a2: Optional[float] = None

    @property
    def lambda1(self):
        return self.lambda_f2

    def constants(self) -> dict:
        keys = ["lambda_f", "lambda_f1", "lambda_f2", "Lambda1", "lambda2", "L", "a1", "a2"]
        return {k: getattr(self, k) for k in keys}


@dataclass(frozen=True)
class ZeroCoupling(Coupling):
    name: ClassVar[str] = "zero"

    def f(self, z, x):
        return np.zeros((_as2d(z).shape[0], _as2d(x).shape[0]))

    def grad_z(self, z, x):
        z, x = _as2d(z), _as2d(x)
        return np.zeros((z.shape[0], x.shape[0], z.shape[1]))

    def grad_x(self, z, x):
        z, x = _as2d(z), _as2d(x)
        return np.zeros((z.shape[0], x.shape[0], x.shape[1]))

    def hess_xx(self, z, x):
        return self.hess_xx2(z, x)

    def mean_grad_z(self, z, xs, wx):
        return np.zeros_like(_as2d(z))

    def mean_grad_x(self, zs, wz, x, second=False):
        return np.zeros_like(_as2d(x))

    lambda_f = 0.0
    lambda_f1 = 0.0
    lambda_f2 = 0.0
    Lambda1 = 0.0
    lambda2 = 0.0
    L = 0.0
    a1 = 0.0
    a2 = 0.0


@dataclass(frozen=True)
class Bilinear(Coupling):
    """``f(z, x) = zᵀ B x``."""

    name: ClassVar[str] = "bilinear"
    matrix: np.ndarray = field(default_factory=lambda: np.eye(1))

    def __post_init__(self):
        b = np.asarray(self.matrix, dtype=float)
        if b.ndim == 0:
            b = b.reshape(1, 1)
        if b.ndim != 2:
            raise InvalidArgumentError("bilinear matrix must be 2D")
        object.__setattr__(self, "matrix", b)

    def f(self, z, x):
        return _as2d(z) @ self.matrix @ _as2d(x).T

    def grad_z(self, z, x):
        z, x = _as2d(z), _as2d(x)
        g = x @ self.matrix.T
        return np.broadcast_to(g[None], (z.shape[0],) + g.shape).copy()

    def grad_x(self, z, x):
        z, x = _as2d(z), _as2d(x)
        g = z @ self.matrix
        return np.broadcast_to(g[:, None], (z.shape[0], x.shape[0], g.shape[1])).copy()

    def hess_xx(self, z, x):
        return self.hess_xx2(z, x)

    # linear in the averaged variable, so the mean field needs only first moments
    def mean_f_z(self, z, xs, wx):
        return _as2d(z) @ (self.matrix @ (wx @ _as2d(xs)))

    def mean_f_x(self, zs, wz, x, second=False):
        if second:
            return np.zeros(_as2d(x).shape[0])
        return _as2d(x) @ (self.matrix.T @ (wz @ _as2d(zs)))

    def mean_grad_z(self, z, xs, wx):
        g = self.matrix @ (wx @ _as2d(xs))
        return np.broadcast_to(g, _as2d(z).shape).copy()

    def mean_grad_x(self, zs, wz, x, second=False):
        x = _as2d(x)
        if second:
            return np.zeros_like(x)
        g = self.matrix.T @ (wz @ _as2d(zs))
        return np.broadcast_to(g, x.shape).copy()

    @property
    def _smax(self):
        return float(np.linalg.norm(self.matrix, 2))

    @property
    def lambda_f(self):
        return -self._smax

    lambda_f1 = 0.0
    lambda_f2 = 0.0
    Lambda1 = 0.0
    lambda2 = 0.0
    a2 = 0.0

    @property
    def L(self):
        return self._smax

    @property
    def a1(self):
        return 0.0 if self._smax == 0 else None


@dataclass(frozen=True)
class QuadraticJoint(Coupling):
    """``f(z, x) = ½ [z; x]ᵀ M [z; x]`` with ``M`` symmetric of size ``d1 + d2``."""

    name: ClassVar[str] = "quadratic_joint"
    matrix: np.ndarray = field(default_factory=lambda: np.eye(2))
    d1: int = 1

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or not 0 < self.d1 < m.shape[0]:
            raise InvalidArgumentError("quadratic_joint needs a square matrix and 0 < d1 < size")
        object.__setattr__(self, "matrix", _sym_matrix(m, m.shape[0], "matrix"))

    @property
    def A(self):
        return self.matrix[: self.d1, : self.d1]

    @property
    def C(self):
        return self.matrix[: self.d1, self.d1:]

    @property
    def D(self):
        return self.matrix[self.d1:, self.d1:]

    def f(self, z, x):
        z, x = _as2d(z), _as2d(x)
        zz = 0.5 * np.einsum("ni,ij,nj->n", z, self.A, z)
        xx = 0.5 * np.einsum("mi,ij,mj->m", x, self.D, x)
        return zz[:, None] + xx[None, :] + z @ self.C @ x.T

    def grad_z(self, z, x):
        z, x = _as2d(z), _as2d(x)
        return (z @ self.A)[:, None, :] + (x @ self.C.T)[None, :, :]

    def grad_x(self, z, x):
        z, x = _as2d(z), _as2d(x)
        return (z @ self.C)[:, None, :] + (x @ self.D)[None, :, :]

    def hess_xx(self, z, x):
        z, x = _as2d(z), _as2d(x)
        return np.broadcast_to(self.D, (z.shape[0], x.shape[0]) + self.D.shape).copy()

    def mean_f_z(self, z, xs, wx):
        z, xs = _as2d(z), _as2d(xs)
        zz = 0.5 * np.einsum("ni,ij,nj->n", z, self.A, z)
        xx = 0.5 * np.einsum("mi,ij,mj->m", xs, self.D, xs)
        return zz + wx @ xx + z @ self.C @ (wx @ xs)

    def mean_f_x(self, zs, wz, x, second=False):
        zs, x = _as2d(zs), _as2d(x)
        if second:
            return np.zeros(x.shape[0])
        zz = 0.5 * np.einsum("ni,ij,nj->n", zs, self.A, zs)
        xx = 0.5 * np.einsum("mi,ij,mj->m", x, self.D, x)
        return wz @ zz + xx + x @ self.C.T @ (wz @ zs)

    def mean_grad_z(self, z, xs, wx):
        return _as2d(z) @ self.A + self.C @ (wx @ _as2d(xs))

    def mean_grad_x(self, zs, wz, x, second=False):
        x = _as2d(x)
        if second:
            return np.zeros_like(x)
        return x @ self.D + (wz @ _as2d(zs)) @ self.C

    @property
    def lambda_f(self):
        return float(np.linalg.eigvalsh(self.matrix)[0])

    @property
    def lambda_f1(self):
        return float(np.linalg.eigvalsh(-self.A)[0])

    @property
    def lambda_f2(self):
        return float(np.linalg.eigvalsh(self.D)[0])

    @property
    def Lambda1(self):
        return float(np.linalg.eigvalsh(self.A)[-1])

    lambda2 = 0.0
    a2 = 0.0

    @property
    def L(self):
        return float(np.linalg.norm(self.C, 2))

    @property
    def a1(self):
        if np.all(self.C == 0) and self.lambda_f2 >= 0:
            return 0.0
        return None


@dataclass(frozen=True)
class LogisticGame(Coupling):
    """Threshold classifier game.

    ``q(z, x) = σ(a n·(z − x))``, ``f(z, x) = 1 − q − l n·z`` and ``f2 = q``.
    In one dimension ``n = 1``.
    """

    name: ClassVar[str] = "logistic_game"
    has_f2: ClassVar[bool] = True
    a: float = 2.0
    l: float = 0.0
    direction: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.a <= 0:
            raise InvalidArgumentError("logistic_game needs a > 0")
        if self.direction is not None:
            n = np.atleast_1d(np.asarray(self.direction, dtype=float))
            object.__setattr__(self, "direction", n / np.linalg.norm(n))

    def _n(self, d):
        if self.direction is not None:
            if self.direction.size != d:
                raise InvalidArgumentError("logistic_game direction does not match dimension")
            return self.direction
        return np.ones(d) / np.sqrt(d)

    def _parts(self, z, x):
        z, x = _as2d(z), _as2d(x)
        n = self._n(z.shape[1])
        u = self.a * ((z @ n)[:, None] - (x @ n)[None, :])
        s = sigmoid(u)
        return z, x, n, s

    def q(self, z, x):
        return self._parts(z, x)[3]

    def f(self, z, x):
        z, x, n, s = self._parts(z, x)
        return 1.0 - s - self.l * (z @ n)[:, None]

    def grad_z(self, z, x):
        z, x, n, s = self._parts(z, x)
        return (-self.a * s * (1 - s) - self.l)[..., None] * n

    def grad_x(self, z, x):
        z, x, n, s = self._parts(z, x)
        return (self.a * s * (1 - s))[..., None] * n

    def hess_xx(self, z, x):
        z, x, n, s = self._parts(z, x)
        d2 = -(self.a**2) * s * (1 - s) * (1 - 2 * s)
        return d2[..., None, None] * np.outer(n, n)

    def f2(self, z, x):
        return self.q(z, x)

    def grad_x2(self, z, x):
        return -self.grad_x(z, x)

    def hess_xx2(self, z, x):
        return -self.hess_xx(z, x)

    @property
    def _k(self):
        return self.a**2 * SIGMOID_D2_MAX

    @property
    def lambda_f(self):
        return -2.0 * self._k

    @property
    def lambda_f1(self):
        return -self._k

    @property
    def lambda_f2(self):
        return -self._k

    @property
    def Lambda1(self):
        return self._k

    @property
    def lambda2(self):
        return -self._k

    @property
    def L(self):
        return self._k

    # x·∇_x f is unbounded below, so a1, a2 do not exist
    a1 = None
    a2 = None


@dataclass(frozen=True)
class TanhProduct(Coupling):
    """``f(z, x) = b Σ_i tanh(z_i) tanh(x_i)``: bounded coupling with finite a1."""

    name: ClassVar[str] = "tanh_product"
    b: float = 1.0

    def f(self, z, x):
        return self.b * np.tanh(_as2d(z)) @ np.tanh(_as2d(x)).T

    def grad_z(self, z, x):
        z, x = _as2d(z), _as2d(x)
        return self.b * (1 / np.cosh(z) ** 2)[:, None, :] * np.tanh(x)[None, :, :]

    def grad_x(self, z, x):
        z, x = _as2d(z), _as2d(x)
        return self.b * np.tanh(z)[:, None, :] * (1 / np.cosh(x) ** 2)[None, :, :]

    def hess_xx(self, z, x):
        z, x = _as2d(z), _as2d(x)
        d2 = -2 * np.tanh(x) / np.cosh(x) ** 2
        diag = self.b * np.tanh(z)[:, None, :] * d2[None, :, :]
        out = np.zeros(diag.shape + (x.shape[1],))
        idx = np.arange(x.shape[1])
        out[..., idx, idx] = diag
        return out

    def mean_grad_z(self, z, xs, wx):
        return self.b * (1 / np.cosh(_as2d(z)) ** 2) * (wx @ np.tanh(_as2d(xs)))

    def mean_grad_x(self, zs, wz, x, second=False):
        x = _as2d(x)
        if second:
            return np.zeros_like(x)
        return self.b * (wz @ np.tanh(_as2d(zs))) * (1 / np.cosh(x) ** 2)

    @property
    def lambda_f(self):
        # Gershgorin bound on the joint Hessian
        return -abs(self.b) * (TANH_D2_MAX + 1.0)

    @property
    def lambda_f1(self):
        return -abs(self.b) * TANH_D2_MAX

    @property
    def lambda_f2(self):
        return -abs(self.b) * TANH_D2_MAX

    @property
    def Lambda1(self):
        return abs(self.b) * TANH_D2_MAX

    lambda2 = 0.0

    @property
    def L(self):
        return abs(self.b)

    @property
    def a1(self):
        return abs(self.b) * X_SECH2_MAX

    a2 = 0.0


# Kernels ------------------------------------------------------------------


class Kernel(_Family):
    """Symmetric interaction kernel ``W(z) = W(−z)``."""

    kind = "kernel"
    lam: Optional[float] = None
    Lam: Optional[float] = None

    def value(self, z):
        raise NotImplementedError

    def grad(self, z):
        raise NotImplementedError

    def conv_value(self, z, zs, ws):
        """``Σ_k w_k W(z − z_k)``."""
        z, zs = _as2d(z), _as2d(zs)
        out = np.empty(z.shape[0])
        step = max(1, _PAIR_BUDGET // max(zs.shape[0], 1))
        for s in range(0, z.shape[0], step):
            diff = z[s:s + step, None, :] - zs[None, :, :]
            out[s:s + step] = self.value(diff.reshape(-1, z.shape[1])).reshape(diff.shape[:2]) @ ws
        return out

    def conv_grad(self, z, zs, ws):
        """``Σ_k w_k ∇W(z − z_k)``."""
        z, zs = _as2d(z), _as2d(zs)
        out = np.empty_like(z)
        step = max(1, _PAIR_BUDGET // max(zs.shape[0], 1))
        for s in range(0, z.shape[0], step):
            diff = z[s:s + step, None, :] - zs[None, :, :]
            g = self.grad(diff.reshape(-1, z.shape[1])).reshape(diff.shape)
            out[s:s + step] = np.einsum("nkd,k->nd", g, ws)
        return out

    def is_zero(self) -> bool:
        return False


@dataclass(frozen=True)
class ZeroKernel(Kernel):
    name: ClassVar[str] = "zero"

    def value(self, z):
        return np.zeros(_as2d(z).shape[0])

    def grad(self, z):
        return np.zeros_like(_as2d(z))

    def conv_value(self, z, zs, ws):
        return np.zeros(_as2d(z).shape[0])

    def conv_grad(self, z, zs, ws):
        return np.zeros_like(_as2d(z))

    def is_zero(self) -> bool:
        return True

    lam = 0.0
    Lam = 0.0


@dataclass(frozen=True)
class QuadraticKernel(Kernel):
    """``W(z) = strength · ‖z‖² / 2``."""

    name: ClassVar[str] = "quadratic"
    strength: float = 1.0

    def value(self, z):
        return 0.5 * self.strength * np.sum(_as2d(z) ** 2, axis=1)

    def grad(self, z):
        return self.strength * _as2d(z)

    def conv_grad(self, z, zs, ws):
        return self.strength * (_as2d(z) - ws @ _as2d(zs))

    @property
    def lam(self):
        return float(self.strength)

    @property
    def Lam(self):
        return float(self.strength)


class _RadialKernel(Kernel):
    """Kernels ``W(z) = w(‖z‖)`` with ``∇W(0) = 0``.

    ``Σ_k w_k ∇W(z − z_k) = (Σ_k w_k φ_k) z − Σ_k w_k φ_k z_k`` with
    ``φ = w′(r)/r``; contractions use einsum so the summation order is fixed.
    """

    def _dw_over_r(self, r):
        raise NotImplementedError

    def _phi(self, r):
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, self._dw_over_r(safe), 0.0)

    def conv_grad(self, z, zs, ws):
        z, zs = _as2d(z), _as2d(zs)
        out = np.empty_like(z)
        wz = zs * ws[:, None]
        step = max(1, _PAIR_BUDGET // max(zs.shape[0], 1))
        for s in range(0, z.shape[0], step):
            phi = self._phi(cdist(z[s:s + step], zs))
            out[s:s + step] = (np.einsum("nk,k->n", phi, ws)[:, None] * z[s:s + step]
                               - np.einsum("nk,kd->nd", phi, wz))
        return out


@dataclass(frozen=True)
class NegAbsKernel(_RadialKernel):
    """``W(z) = −‖z‖``; the gradient at the origin is taken as 0."""

    name: ClassVar[str] = "neg_abs"

    def value(self, z):
        return -np.linalg.norm(_as2d(z), axis=1)

    def grad(self, z):
        z = _as2d(z)
        r = np.linalg.norm(z, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(r > 0, -z / np.where(r > 0, r, 1.0), 0.0)
        return g

    def conv_grad(self, z, zs, ws):
        z, zs = _as2d(z), _as2d(zs)
        if z.shape[1] != 1:
            return _RadialKernel.conv_grad(self, z, zs, ws)
        # 1D: Σ_k w_k (−sign(z − z_k)) = mass above − mass below
        order = np.argsort(zs[:, 0], kind="stable")
        sz, sw = zs[order, 0], ws[order]
        cw = np.concatenate([[0.0], np.cumsum(sw)])
        below = cw[np.searchsorted(sz, z[:, 0], side="left")]
        upto = cw[np.searchsorted(sz, z[:, 0], side="right")]
        above = cw[-1] - upto
        return (above - below)[:, None]

    def _dw_over_r(self, r):
        return -1.0 / r

    lam = None
    # concave away from the origin
    Lam = 0.0


@dataclass(frozen=True)
class MorseKernel(_RadialKernel):
    """``W(z) = c1 e^{−‖z‖/l1} − c2 e^{−‖z‖/l2}``; the gradient at the origin is 0."""

    name: ClassVar[str] = "morse"
    c1: float = 4.0
    c2: float = 2.0
    l1: float = 0.2
    l2: float = 4.0

    def __post_init__(self):
        if self.l1 <= 0 or self.l2 <= 0:
            raise InvalidArgumentError("morse kernel needs positive length scales")

    def value(self, z):
        r = np.linalg.norm(_as2d(z), axis=1)
        return self.c1 * np.exp(-r / self.l1) - self.c2 * np.exp(-r / self.l2)

    def grad(self, z):
        z = _as2d(z)
        r = np.linalg.norm(z, axis=1, keepdims=True)
        dw = -self.c1 / self.l1 * np.exp(-r / self.l1) + self.c2 / self.l2 * np.exp(-r / self.l2)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, dw * z / safe, 0.0)

    def _dw_over_r(self, r):
        return (-self.c1 / self.l1 * np.exp(-r / self.l1) + self.c2 / self.l2 * np.exp(-r / self.l2)) / r

    lam = None
    Lam = None


# Registry and parsing -----------------------------------------------------

REGISTRY = {
    "potential": {c.name: c for c in (ZeroPotential, QuadraticPotential, NegLogGaussian, LogisticLoss)},
    "coupling": {c.name: c for c in (ZeroCoupling, Bilinear, QuadraticJoint, LogisticGame, TanhProduct)},
    "kernel": {c.name: c for c in (ZeroKernel, QuadraticKernel, NegAbsKernel, MorseKernel)},
}


def make_family(kind: str, spec: dict, where: str = ""):
    """Build a family from ``{"family": name, **params}``; unknown keys are errors."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError(f"{where}: expected a table with a 'family' key")
    name = spec["family"]
    table = REGISTRY[kind]
    if name not in table:
        raise ConfigError(f"{where}.family: unknown {kind} family {name!r}; choose from {sorted(table)}")
    cls = table[name]
    allowed = {f.name for f in fields(cls)}
    params = {k: v for k, v in spec.items() if k != "family"}
    for k in params:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}: unknown parameter for {kind} family {name!r}")
    try:
        return cls(**params)
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def all_families():
    """One representative instance per shipped family, for property suites."""
    return [
        ZeroPotential(),
        QuadraticPotential(center=[0.5], curvature=2.0),
        NegLogGaussian(mean=[1.0], cov_diag=[2.0], scale=0.5),
        LogisticLoss(a=2.0, sign=-1.0, tilt=0.1, center=0.3),
        ZeroCoupling(),
        Bilinear(matrix=[[1.5]]),
        QuadraticJoint(matrix=[[1.0, -0.5], [-0.5, 2.0]], d1=1),
        LogisticGame(a=2.0, l=0.06),
        TanhProduct(b=0.7),
        ZeroKernel(),
        QuadraticKernel(strength=0.8),
        NegAbsKernel(),
        MorseKernel(),
    ]

