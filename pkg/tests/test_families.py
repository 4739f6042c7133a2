import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coupledwgf.errors import ConfigError, InvalidArgumentError
from coupledwgf.families import (
    Bilinear,
    LogisticGame,
    LogisticLoss,
    MorseKernel,
    NegAbsKernel,
    NegLogGaussian,
    QuadraticJoint,
    QuadraticKernel,
    QuadraticPotential,
    TanhProduct,
    all_families,
    make_family,
)

POTENTIALS = [f for f in all_families() if f.kind == "potential"]
COUPLINGS = [f for f in all_families() if f.kind == "coupling"]
KERNELS = [f for f in all_families() if f.kind == "kernel"]
H = 1e-6


def _fd_grad(fun, pts):
    out = np.zeros_like(pts)
    for k in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[k] = H
        out[:, k] = (fun(pts + e) - fun(pts - e)) / (2 * H)
    return out


@pytest.mark.parametrize("fam", POTENTIALS, ids=lambda f: f.name)
def test_potential_grad_hess(fam):
    z = np.random.default_rng(0).uniform(-3, 3, (25, 1))
    assert np.allclose(fam.grad(z), _fd_grad(fam.value, z), atol=1e-7, rtol=1e-6)
    fd_h = _fd_grad(lambda p: fam.grad(p)[:, 0], z)
    assert np.allclose(fam.hess(z)[:, 0, 0], fd_h[:, 0], atol=1e-6, rtol=1e-5)


@pytest.mark.parametrize("fam", POTENTIALS, ids=lambda f: f.name)
def test_potential_bounds(fam):
    z = np.linspace(-6, 6, 401)[:, None]
    hs = fam.hess(z)[:, 0, 0]
    assert np.all(hs >= fam.lam - 1e-12) and np.all(hs <= fam.Lam + 1e-12)


@pytest.mark.parametrize("fam", COUPLINGS, ids=lambda f: f.name)
def test_coupling_grads(fam):
    rng = np.random.default_rng(1)
    z, x = rng.uniform(-2, 2, (7, 1)), rng.uniform(-2, 2, (5, 1))
    gz = fam.grad_z(z, x)
    gx = fam.grad_x(z, x)
    for m in range(x.shape[0]):
        fd = _fd_grad(lambda p: fam.f(p, x[m:m + 1])[:, 0], z)
        assert np.allclose(gz[:, m, :], fd, atol=1e-7)
    for n in range(z.shape[0]):
        fd = _fd_grad(lambda p: fam.f(z[n:n + 1], p)[0, :], x)
        assert np.allclose(gx[n], fd, atol=1e-7)
        fd2 = _fd_grad(lambda p: fam.f2(z[n:n + 1], p)[0, :], x)
        assert np.allclose(fam.grad_x2(z[n:n + 1], x)[0], fd2, atol=1e-7)
        fdh = _fd_grad(lambda p: fam.grad_x(z[n:n + 1], p)[0, :, 0], x)
        assert np.allclose(fam.hess_xx(z[n:n + 1], x)[0, :, 0, 0], fdh[:, 0], atol=1e-6)


@pytest.mark.parametrize("fam", COUPLINGS, ids=lambda f: f.name)
def test_coupling_mean_reductions(fam):
    rng = np.random.default_rng(2)
    z, x = rng.uniform(-2, 2, (6, 1)), rng.uniform(-2, 2, (4, 1))
    wz, wx = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(4))
    assert np.allclose(fam.mean_f_z(z, x, wx), fam.f(z, x) @ wx)
    assert np.allclose(fam.mean_f_x(z, wz, x), wz @ fam.f(z, x))
    assert np.allclose(fam.mean_grad_z(z, x, wx), np.einsum("nmd,m->nd", fam.grad_z(z, x), wx))
    assert np.allclose(fam.mean_grad_x(z, wz, x), np.einsum("nmd,n->md", fam.grad_x(z, x), wz))


@pytest.mark.parametrize("fam", COUPLINGS, ids=lambda f: f.name)
def test_coupling_constant_bounds(fam):
    """Sampled Hessians respect the reported λ and Λ constants."""
    g = np.linspace(-4, 4, 41)
    zz, xx = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([zz.ravel(), xx.ravel()])
    e = 1e-4
    for z0, x0 in pts[::7]:
        z, x = np.array([[z0]]), np.array([[x0]])
        fzz = (fam.f(z + e, x) - 2 * fam.f(z, x) + fam.f(z - e, x))[0, 0] / e**2
        fxx = fam.hess_xx(z, x)[0, 0, 0, 0]
        if fam.lambda_f1 is not None:
            assert -fzz >= fam.lambda_f1 - 1e-5
        if fam.Lambda1 is not None:
            assert fzz <= fam.Lambda1 + 1e-5
        if fam.lambda_f2 is not None:
            assert fxx >= fam.lambda_f2 - 1e-6
        if fam.a1 is not None:
            assert (x * fam.grad_x(z, x)[0, 0])[0, 0] >= -fam.a1 - 1e-12


def test_quadratic_joint_constants():
    f = QuadraticJoint([[-1.0, 0.5], [0.5, 2.0]])
    assert f.lambda_f1 == pytest.approx(1.0) and f.lambda_f2 == pytest.approx(2.0)
    assert f.L == pytest.approx(0.5)


def test_bilinear_constants():
    f = Bilinear([[3.0]])
    assert (f.lambda_f1, f.lambda_f2, f.L, f.a1) == (0.0, 0.0, 3.0, None)
    assert f.lambda_f == -3.0


def test_tanh_a1_is_tight():
    f = TanhProduct(b=1.0)
    x = np.linspace(-5, 5, 20001)[:, None]
    vals = (x[:, 0] * f.grad_x(np.array([[-20.0]]), x)[0, :, 0])
    assert vals.min() == pytest.approx(-f.a1, rel=1e-6)


def test_logistic_q():
    g = LogisticGame(a=2.0)
    assert g.q(np.array([[0.0]]), np.array([[0.0]]))[0, 0] == 0.5
    assert g.f(np.array([[1.0]]), np.array([[0.0]]))[0, 0] == pytest.approx(1 - 1 / (1 + np.exp(-2)))


# kernels


@pytest.mark.parametrize("fam", KERNELS, ids=lambda f: f.name)
@pytest.mark.parametrize("d", [1, 2])
def test_kernel_antisymmetry(fam, d):
    z = np.random.default_rng(3).normal(size=(1000, d)) * 2
    assert np.array_equal(fam.grad(z), -fam.grad(-z))
    assert np.array_equal(fam.value(z), fam.value(-z))


@pytest.mark.parametrize("fam", KERNELS, ids=lambda f: f.name)
def test_kernel_origin(fam):
    assert np.all(fam.grad(np.zeros((1, 2))) == 0.0)


@pytest.mark.parametrize("fam", KERNELS, ids=lambda f: f.name)
@pytest.mark.parametrize("d", [1, 2])
def test_conv_grad_matches_loop(fam, d):
    rng = np.random.default_rng(4)
    z, zs, ws = rng.normal(size=(30, d)), rng.normal(size=(40, d)), rng.dirichlet(np.ones(40))
    zs[3] = z[5]
    loop = np.array([sum(w * fam.grad((zi - zk)[None])[0] for zk, w in zip(zs, ws)) for zi in z])
    assert np.allclose(fam.conv_grad(z, zs, ws), loop, atol=1e-13)
    vloop = np.array([sum(w * fam.value((zi - zk)[None])[0] for zk, w in zip(zs, ws)) for zi in z])
    assert np.allclose(fam.conv_value(z, zs, ws), vloop, atol=1e-13)


@pytest.mark.parametrize("fam", KERNELS, ids=lambda f: f.name)
def test_kernel_fd(fam):
    z = np.random.default_rng(5).uniform(0.1, 3, (20, 2)) * np.array([1, -1])
    assert np.allclose(fam.grad(z), _fd_grad(fam.value, z), atol=1e-6)


def test_kernel_lambdas():
    assert NegAbsKernel().lam is None and MorseKernel().lam is None
    assert QuadraticKernel(strength=2.0).lam == 2.0


@given(arrays(float, (2, 1), elements=st.floats(-5, 5)))
def test_negabs_pair_repels(pts):
    k = NegAbsKernel()
    g = k.conv_grad(pts, pts, np.array([0.5, 0.5]))
    if pts[0, 0] != pts[1, 0]:
        # −∇W∗ρ pushes each point away from the other
        assert np.sign(-g[0, 0]) == np.sign(pts[0, 0] - pts[1, 0])


# construction


def test_make_family():
    f = make_family("potential", {"family": "quadratic", "center": [1.0], "curvature": 2.0})
    assert isinstance(f, QuadraticPotential) and f.lam == 2.0
    with pytest.raises(ConfigError, match="unknown parameter"):
        make_family("potential", {"family": "quadratic", "centre": [1.0]}, "energy.v1")
    with pytest.raises(ConfigError, match="unknown potential family"):
        make_family("potential", {"family": "cubic"}, "energy.v1")
    with pytest.raises(ConfigError):
        make_family("potential", {"family": "neg_log_gaussian", "cov_diag": [-1.0]}, "energy.v1")


def test_invalid_families():
    with pytest.raises(InvalidArgumentError):
        NegLogGaussian(mean=[0.0], cov_diag=[1.0], scale=0.0)
    with pytest.raises(InvalidArgumentError):
        LogisticLoss(a=-1.0)
    with pytest.raises(InvalidArgumentError):
        LogisticGame(a=0.0)
    with pytest.raises(InvalidArgumentError):
        MorseKernel(l1=0.0)
    with pytest.raises(InvalidArgumentError):
        QuadraticJoint([[1.0]])


@pytest.mark.parametrize("fam", all_families(), ids=lambda f: f"{f.kind}-{f.name}")
def test_to_dict_roundtrip(fam):
    d = fam.to_dict()
    again = make_family(fam.kind, {k: v for k, v in d.items()})
    assert again.to_dict() == d
