import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import norm

from coupledwgf.errors import InvalidArgumentError, InvalidSeriesError, UnsupportedRepresentationError
from coupledwgf.measures import DiracState, GridDensity, ParticleEnsemble
from coupledwgf.ot_metrics import fit_rate, w2, w2_1d, w2_assignment, wbar
from oracles import brute_w2, gaussian_cell_averages, linear_fit_rate, quantile_w2

pts1 = arrays(float, st.integers(1, 12), elements=st.floats(-20, 20))


def test_dirac_pair():
    assert w2_1d(DiracState([0.0]), DiracState([2.0])) == 2.0


def test_shifted_pairs():
    assert w2_1d(ParticleEnsemble.uniform([[0.0], [2.0]]), ParticleEnsemble.uniform([[1.0], [3.0]])) == 1.0


@pytest.mark.parametrize("m", [0.3, 1.0, 2.5])
def test_gaussian_translation(m):
    a = GridDensity(-10, 10, gaussian_cell_averages(-10, 10, 800))
    b = GridDensity(-10, 10, gaussian_cell_averages(-10, 10, 800, mean=m))
    assert w2_1d(a, b) == pytest.approx(m, abs=1e-3)


def test_grid_vs_quantile_quadrature():
    a = GridDensity(-8, 8, gaussian_cell_averages(-8, 8, 300, 0.0, 1.0))
    b = GridDensity(-8, 8, gaussian_cell_averages(-8, 8, 300, 0.5, 0.3))
    exact = quantile_w2(lambda s: norm.ppf(s), lambda s: 0.5 + np.sqrt(0.3) * norm.ppf(s))
    assert w2_1d(a, b) == pytest.approx(exact, abs=2e-3)


def test_grid_vs_ensemble():
    # a uniform density on [0, 1] against its quantile midpoints
    g = GridDensity(0.0, 1.0, np.ones(7))
    n = 1000
    e = ParticleEnsemble.uniform(((np.arange(n) + 0.5) / n)[:, None])
    # W₂² = n · ∫_{-1/2n}^{1/2n} u² du = 1/(12 n²)
    assert w2_1d(g, e) == pytest.approx(np.sqrt(1 / (12 * n * n)), rel=1e-9)


def test_tiny_tail_masses_stay_finite():
    v = gaussian_cell_averages(-8, 8, 4000, 0.0, 0.09)
    a = GridDensity(-8, 8, v)
    b = GridDensity(-8, 8, v * (1 + 1e-13 * np.cos(np.arange(v.size))))
    assert w2_1d(a, b) < 1e-6


def test_w2_1d_dimension_error():
    with pytest.raises(InvalidArgumentError):
        w2_1d(ParticleEnsemble.uniform([[0.0, 1.0]]), DiracState([0.0]))


def test_assignment_basic():
    a = ParticleEnsemble.uniform([[0.0, 0.0], [1.0, 0.0]])
    assert w2_assignment(a, a) == 0.0
    b = ParticleEnsemble.uniform([[0.0, 1.0], [1.0, 1.0]])
    assert w2_assignment(a, b) == pytest.approx(1.0, abs=1e-15)


def test_assignment_six_points():
    rng = np.random.default_rng(6)
    for _ in range(20):
        x, y = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
        got = w2_assignment(ParticleEnsemble.uniform(x), ParticleEnsemble.uniform(y))
        assert got == pytest.approx(brute_w2(x, y), abs=1e-12)


def test_assignment_oracle_equivalence():
    rng = np.random.default_rng(9)
    for trial in range(1000):
        n = int(rng.integers(1, 9))
        d = int(rng.integers(1, 4))
        x, y = rng.normal(size=(n, d)), rng.normal(size=(n, d)) * 2 + 0.5
        got = w2_assignment(ParticleEnsemble.uniform(x), ParticleEnsemble.uniform(y))
        assert abs(got - brute_w2(x, y)) < 1e-12, trial


def test_assignment_errors():
    a = ParticleEnsemble.uniform([[0.0], [1.0]])
    with pytest.raises(UnsupportedRepresentationError):
        w2_assignment(a, ParticleEnsemble.uniform([[0.0]]))
    with pytest.raises(UnsupportedRepresentationError):
        w2_assignment(a, ParticleEnsemble([[0.0], [1.0]], [0.3, 0.7]))
    with pytest.raises(UnsupportedRepresentationError):
        w2_assignment(a, DiracState([0.0]))


@given(pts1, st.integers(0, 2**31))
def test_1d_matches_assignment(p, seed):
    q = np.random.default_rng(seed).normal(size=p.size) * 5
    a, b = ParticleEnsemble.uniform(p[:, None]), ParticleEnsemble.uniform(q[:, None])
    assert abs(w2_1d(a, b) - w2_assignment(a, b)) < 1e-10


@given(pts1)
def test_1d_general_path_matches_sorted(p):
    q = p[::-1] * 0.5 + 1.0
    a, b = ParticleEnsemble.uniform(p[:, None]), ParticleEnsemble.uniform(q[:, None])
    # unequal-count route: duplicate every point of b, same measure
    b2 = ParticleEnsemble.uniform(np.repeat(q, 2)[:, None])
    assert abs(w2_1d(a, b) - w2_1d(a, b2)) < 1e-10


@given(arrays(float, (5, 2), elements=st.floats(-10, 10)),
       arrays(float, (2,), elements=st.floats(-10, 10)))
def test_translation(p, c):
    a = ParticleEnsemble.uniform(p)
    assert w2(a, a.with_points(p + c)) == pytest.approx(np.linalg.norm(c), abs=1e-12)


@given(pts1, st.integers(0, 2**31))
def test_symmetric_nonnegative(p, seed):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(p.size))
    a = ParticleEnsemble(p[:, None], w)
    b = ParticleEnsemble.uniform(rng.normal(size=(4, 1)))
    assert w2(a, b) >= 0 and w2(a, b) == pytest.approx(w2(b, a), abs=1e-12)
    assert w2(a, a) == 0.0


@given(st.integers(0, 2**31))
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    es = [ParticleEnsemble.uniform(rng.normal(size=(5, 2)) * rng.uniform(0.1, 3)) for _ in range(3)]
    ms = [ParticleEnsemble.uniform(rng.normal(size=(4, 1))) for _ in range(3)]
    d = lambda i, j: wbar((es[i], es[j]), (ms[i], ms[j]))
    assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12


def test_wbar():
    a = ParticleEnsemble.uniform([[0.0], [1.0]])
    assert wbar((a, a), (a, a)) == 0.0
    assert wbar((DiracState([0.0]), DiracState([3.0])), (DiracState([0.0]), DiracState([4.0]))) == 5.0
    g1 = GridDensity(-5, 5, gaussian_cell_averages(-5, 5, 100, 0.2, 1.0))
    g2 = GridDensity(-5, 5, gaussian_cell_averages(-5, 5, 100, -0.4, 0.5))
    x1, x2 = DiracState([1.0]), DiracState([0.5])
    assert wbar((g1, g2), (x1, x2)) == pytest.approx(np.hypot(w2_1d(g1, g2), 0.5), abs=1e-15)


def test_w2_dirac_vs_cloud_2d():
    e = ParticleEnsemble.uniform([[1.0, 0.0], [-1.0, 0.0]])
    assert w2(DiracState([0.0, 0.0]), e) == pytest.approx(1.0)


# fit_rate


def test_fit_exact_exponential():
    t = np.arange(6.0)
    f = fit_rate(t, np.exp(-2 * t), (0.0, 5.0))
    assert f.rate == pytest.approx(2.0, abs=1e-12) and f.r_squared == 1.0


def test_fit_constant():
    f = fit_rate(np.arange(10.0), np.full(10, 3.0))
    assert f.rate == pytest.approx(0.0, abs=1e-14)


def test_fit_noisy():
    rng = np.random.default_rng(12)
    t = np.linspace(0, 400, 401)
    v = np.exp(-0.01 * t) * (1 + 0.01 * rng.standard_normal(t.size))
    f = fit_rate(t, v, (0.0, 400.0))
    assert 0.009 <= f.rate <= 0.011
    assert f.rate == pytest.approx(linear_fit_rate(t, v), rel=1e-10)


def test_fit_default_window():
    t = np.linspace(0, 10, 101)
    f = fit_rate(t, np.exp(-t))
    assert f.window == pytest.approx((1.0, 10.0)) and f.n_points == 91


def test_fit_errors():
    with pytest.raises(InvalidSeriesError):
        fit_rate([0, 1, 2], [1.0, 0.0, 1.0], (0, 2))
    with pytest.raises(InvalidSeriesError):
        fit_rate([0, 1], [1.0, 0.5], (0, 1))
    with pytest.raises(InvalidSeriesError):
        fit_rate([], [])
