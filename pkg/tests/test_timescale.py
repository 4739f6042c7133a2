import numpy as np
import pytest

from coupledwgf.energy import ApplicationExtras, EnergySpec, Mode, eval_energy, rate_constants
from coupledwgf.errors import ConvergenceError, ConvexityError, InvalidArgumentError
from coupledwgf.families import (
    Bilinear,
    LogisticGame,
    MorseKernel,
    NegLogGaussian,
    QuadraticJoint,
    QuadraticKernel,
    TanhProduct,
    ZeroCoupling,
)
from coupledwgf.fv_solver import GridSpec
from coupledwgf.measures import DiracState, GridDensity, ParticleEnsemble
from coupledwgf.ot_metrics import w2
from coupledwgf.timescale import (
    best_response_rho,
    best_response_x,
    danskin_check,
    envelope_gradient,
    fast_algorithm_flow,
    fast_population_flow,
    fast_rho_fixed_point,
    fast_x_fixed_point,
    reduced_energy,
)
from oracles import gaussian_cell_averages, golden_section, sigmoid

C = Mode.COMPETITIVE
STD = NegLogGaussian(mean=[0.0], cov_diag=[1.0])
GRID = GridSpec(-8.0, 8.0, 400)
SMALL = GridSpec(-8.0, 8.0, 200)


def spec_with(coupling, kappa=1.0, x0=(0.0,), pi=None, **kw):
    kw.setdefault("alpha", 1.0)
    kw.setdefault("v1", STD)
    return EnergySpec(mode=C, coupling=coupling, extras=ApplicationExtras(kappa, np.array(x0), pi), **kw)


def moments(g):
    m = g.h * np.sum(g.centers * g.values)
    v = g.h * np.sum((g.centers - m) ** 2 * g.values)
    return m, v


# Best response of the algorithm ----------------------------------------------


def test_br_x_quadratic_joint():
    # f = (x - z)^2 / 2 against δ₁ with κ = 1: (x - 1) + x = 0
    spec = spec_with(QuadraticJoint(matrix=[[1.0, -1.0], [-1.0, 1.0]]))
    rep = best_response_x(spec, DiracState([1.0]))
    assert rep.value[0] == pytest.approx(0.5, abs=1e-12)
    assert rep.residual < 1e-10 and rep.iterations <= 100


def test_br_x_pure_regularizer():
    spec = spec_with(ZeroCoupling(), kappa=2.0, x0=(3.0,))
    rep = best_response_x(spec, DiracState([-4.0]))
    assert rep.value[0] == pytest.approx(3.0, abs=1e-14)
    assert rep.bound_check == {"norm_sq": pytest.approx(9.0), "bound": 9.0}


def test_br_x_logistic_vs_golden_section():
    a = 2.0
    spec = spec_with(LogisticGame(a=a), pi=ParticleEnsemble.uniform([[1.0]]))
    rep = best_response_x(spec, DiracState([0.0]))

    def g(x):
        return 1 - sigmoid(a * (0.0 - x)) + sigmoid(a * (1.0 - x)) + 0.5 * x * x

    ref = golden_section(g, -5.0, 5.0, tol=1e-12)
    assert rep.value[0] == pytest.approx(ref, abs=1e-8)
    # x·∇_x f is unbounded below here, so no bound is reported
    assert rep.bound_check is None


def test_br_x_optimality_under_perturbation():
    rng = np.random.default_rng(3)
    rho = ParticleEnsemble.uniform(rng.normal(size=(50, 2)))
    coup = QuadraticJoint(matrix=[[1.0, 0.2, -0.5, 0.1], [0.2, 1.0, 0.0, -0.4],
                                  [-0.5, 0.0, 1.0, 0.0], [0.1, -0.4, 0.0, 2.0]], d1=2)
    spec = EnergySpec(mode=C, coupling=coup, dim_rho=2, dim_mu=2,
                      v1=NegLogGaussian(mean=[0.0, 0.0], cov_diag=[1.0, 1.0]),
                      extras=ApplicationExtras(1.0, np.array([0.5, -1.0])))
    b = best_response_x(spec, rho).value
    g0 = eval_energy(spec, rho, DiracState(b))
    for _ in range(10):
        d = rng.normal(size=2)
        d /= np.linalg.norm(d)
        for s in (1e-3, -1e-3):
            assert eval_energy(spec, rho, DiracState(b + s * d)) > g0


def test_br_x_convexity_error():
    spec = spec_with(QuadraticJoint(matrix=[[0.0, 0.0], [0.0, -3.0]]))
    with pytest.raises(ConvexityError):
        best_response_x(spec, DiracState([0.0]), x_init=[1.0])


def test_br_x_iteration_limit():
    spec = spec_with(LogisticGame(a=2.0), pi=ParticleEnsemble.uniform([[1.0]]))
    with pytest.raises(ConvergenceError):
        best_response_x(spec, DiracState([0.0]), x_init=[1.5], max_iter=1)


def test_br_x_needs_extras():
    with pytest.raises(InvalidArgumentError):
        best_response_x(EnergySpec(mode=C, coupling=Bilinear()), DiracState([0.0]))


# Best response of the population -----------------------------------------------


def test_br_rho_bilinear_gibbs():
    spec = spec_with(Bilinear())
    rep = best_response_rho(spec, [0.7], GRID)
    c = GRID.centers
    e = np.exp(0.7 * c - c * c / 2)
    assert np.max(np.abs(rep.value.values - e / (GRID.h * e.sum()))) < 1e-6
    m, v = moments(rep.value)
    assert m == pytest.approx(0.7, abs=1e-6) and v == pytest.approx(1.0, abs=1e-6)
    assert rep.residual < 1e-8
    # deviation from the exact cell averages is the O(h²) midpoint error
    assert np.max(np.abs(rep.value.values - gaussian_cell_averages(-8, 8, 400, 0.7, 1.0))) < 1e-4


def test_br_rho_x_zero_is_reference():
    rep = best_response_rho(spec_with(Bilinear()), [0.0], GRID)
    c = GRID.centers
    e = np.exp(-c * c / 2)
    assert np.max(np.abs(rep.value.values - e / (GRID.h * e.sum()))) < 1e-12


def test_br_rho_with_kernel_refined_grid():
    # quadratic W₁ of strength s: r(x) = N(x, 1/(1+s))
    s = 1.0
    spec = spec_with(Bilinear(), w1=QuadraticKernel(strength=s))
    coarse = best_response_rho(spec, [0.7], GRID).value
    fine = best_response_rho(spec, [0.7], GridSpec(-8.0, 8.0, 800)).value
    mc, vc = moments(coarse)
    mf, vf = moments(fine)
    assert abs(mc - mf) < 1e-6 and abs(vc - vf) < 1e-6
    assert mc == pytest.approx(0.7, abs=1e-6) and vc == pytest.approx(1 / (1 + s), abs=1e-6)


def test_br_rho_two_cell_transfers_lower_energy():
    spec = spec_with(Bilinear(), w1=MorseKernel(c1=1.0, c2=0.5, l1=0.5, l2=2.0))
    x = np.array([0.4])
    r = best_response_rho(spec, x, SMALL).value
    g0 = eval_energy(spec, r, DiracState(x))
    rng = np.random.default_rng(11)
    bulk = np.flatnonzero(r.values > 1e-3)
    for _ in range(10):
        i, j = rng.choice(bulk, 2, replace=False)
        v = np.array(r.values)
        dm = 1e-3 * v[i]
        v[i] -= dm
        v[j] += dm
        assert eval_energy(spec, r.with_values(v), DiracState(x)) < g0


def test_br_rho_needs_alpha():
    with pytest.raises(InvalidArgumentError):
        best_response_rho(spec_with(Bilinear(), alpha=0.0), [0.0], GRID)


def test_competitive_mode_required():
    spec = EnergySpec(coupling=Bilinear(), alpha=1.0, extras=ApplicationExtras(1.0, np.zeros(1)))
    with pytest.raises(InvalidArgumentError):
        best_response_rho(spec, [0.0], GRID)


# Danskin --------------------------------------------------------------------


def test_danskin_bilinear():
    spec = spec_with(Bilinear(), x0=(2.0,))
    rep = danskin_check(spec, [0.5], 1e-4, GRID)
    assert rep["rel_err"] < 1e-4
    # G_d(x) = x²/2 + κ/2 (x − x₀)² + const
    assert rep["analytic"][0] == pytest.approx(0.5 + (0.5 - 2.0), abs=1e-8)


def test_danskin_x_independent():
    spec = spec_with(ZeroCoupling(), kappa=1.5, x0=(1.0,))
    rep = danskin_check(spec, [0.25], 1e-3, SMALL)
    assert rep["analytic"][0] == 1.5 * (0.25 - 1.0)
    assert rep["fd"][0] == pytest.approx(1.5 * (0.25 - 1.0), abs=1e-9)


def test_danskin_logistic():
    spec = spec_with(LogisticGame(a=2.0), pi=ParticleEnsemble.uniform([[1.0], [1.5]]))
    assert danskin_check(spec, [0.3], 1e-3, SMALL)["rel_err"] < 1e-3


@pytest.mark.parametrize("coupling,w1", [
    (Bilinear(matrix=[[0.5]]), QuadraticKernel(strength=0.5)),
    (QuadraticJoint(matrix=[[0.5, -0.3], [-0.3, 1.0]]), None),
    (TanhProduct(b=0.7), MorseKernel(c1=1.0, c2=0.5, l1=0.5, l2=2.0)),
    (LogisticGame(a=1.5, l=0.2), None),
])
def test_danskin_family_combinations(coupling, w1):
    kw = {} if w1 is None else {"w1": w1}
    pi = ParticleEnsemble.uniform([[0.5]]) if coupling.has_f2 else None
    spec = spec_with(coupling, x0=(0.5,), pi=pi, **kw)
    assert danskin_check(spec, [-0.2], 1e-3, SMALL)["rel_err"] < 1e-3


def test_danskin_needs_positive_h():
    with pytest.raises(InvalidArgumentError):
        danskin_check(spec_with(Bilinear()), [0.0], 0.0, SMALL)


def test_reduced_energy_matches_closed_form():
    # G_d(x) = x²/2 + κ/2 (x − x₀)² + const for the bilinear example
    spec = spec_with(Bilinear(), x0=(2.0,))
    vals = [reduced_energy(spec, [x], GRID)[0] for x in (-1.0, 0.0, 1.0)]
    second = vals[0] - 2 * vals[1] + vals[2]
    assert second == pytest.approx(2.0, abs=1e-8)


# Flows ----------------------------------------------------------------------


def test_fast_population_fixed_point_and_stationarity():
    spec = spec_with(Bilinear(), x0=(2.0,))
    x_inf = fast_rho_fixed_point(spec, GRID)
    # stationarity of x²/2 + (x − 2)²/2
    assert x_inf[0] == pytest.approx(1.0, abs=1e-6)
    r = best_response_rho(spec, x_inf, GRID).value
    assert np.abs(envelope_gradient(spec, r, x_inf)).max() < 1e-12
    traj = fast_population_flow(spec, x_inf, 0.5, 0.01, GRID, x_ref=x_inf, keep_snapshots=False)
    _, d = traj.series("x_dist")
    assert d.max() < 1e-8


def test_fast_population_flow_converges():
    spec = spec_with(Bilinear(), x0=(2.0,))
    lam_d = rate_constants(spec).lambda_d
    traj = fast_population_flow(spec, [-1.0], 6.0, 0.01, GRID, x_ref=[1.0], keep_snapshots=False)
    t, d = traj.series("x_dist")
    ok = d > 1e-9
    rate = -np.polyfit(t[ok], np.log(d[ok]), 1)[0]
    assert rate >= 0.9 * lam_d
    _, gd = traj.series("G_d")
    assert np.all(np.diff(gd) <= 1e-12)
    assert traj.meta["x_final"][0] == pytest.approx(1.0, abs=1e-4)


def test_fast_population_stability_refusal():
    with pytest.raises(InvalidArgumentError):
        fast_population_flow(spec_with(Bilinear()), [0.0], 1.0, 10.0, GRID)


def tanh_spec():
    return spec_with(TanhProduct(b=0.5), x0=(1.0,))


def test_fast_algorithm_fixed_point_stationary():
    spec = tanh_spec()
    g = GridSpec(-6.0, 6.0, 120)
    rho_inf, b_inf = fast_x_fixed_point(spec, g)
    assert b_inf[0] == pytest.approx(best_response_x(spec, rho_inf).value[0], abs=1e-10)
    traj = fast_algorithm_flow(spec, rho_inf, 0.5, 1e-3, keep_snapshots=False)
    assert w2(traj.final.rho, rho_inf) < 1e-6
    _, b = traj.series("b_0")
    assert np.ptp(b) < 1e-8


def test_fast_algorithm_flow_bound_and_decay():
    spec = tanh_spec()
    g = GridSpec(-6.0, 6.0, 120)
    rho_inf, _ = fast_x_fixed_point(spec, g)
    rho0 = GridDensity(-6.0, 6.0, gaussian_cell_averages(-6, 6, 120, 2.0, 0.5))
    obs = [lambda t, r, m: {"w2_ref": w2(r, rho_inf)}]
    traj = fast_algorithm_flow(spec, rho0, 3.0, 1e-3, observers=obs, snapshot_every=0.1,
                               keep_snapshots=False)
    bound = traj.meta["bound"]
    # a₁ = b max_x x sech²(x)
    u = golden_section(lambda u: -u / np.cosh(u) ** 2, 0.0, 3.0)
    a1 = 0.5 * u / np.cosh(u) ** 2
    assert bound == pytest.approx(1.0 + 2 * a1 / 1.0, rel=1e-9)
    assert traj.meta["bound_ratio_max"] <= 1.0
    _, nsq = traj.series("b_norm_sq")
    assert np.all(nsq <= bound)
    t, d = traj.series("w2_ref")
    sel = (t > 0.3) & (d > 1e-7)
    rate = -np.polyfit(t[sel], np.log(d[sel]), 1)[0]
    assert rate >= 0.9 * rate_constants(spec).lambda_b


def test_fast_algorithm_particles_runs():
    spec = tanh_spec()
    rho0 = ParticleEnsemble.uniform(np.random.default_rng(0).normal(2.0, 0.7, size=(200, 1)))
    a = fast_algorithm_flow(spec, rho0, 0.2, 1e-2, solver="particles", seed=4, keep_snapshots=False)
    b = fast_algorithm_flow(spec, rho0, 0.2, 1e-2, solver="particles", seed=4, keep_snapshots=False)
    assert np.array_equal(a.final.rho.points, b.final.rho.points)
    assert a.meta["bound_ratio_max"] <= 1.0


def test_fast_algorithm_solver_checks():
    spec = tanh_spec()
    with pytest.raises(InvalidArgumentError):
        fast_algorithm_flow(spec, ParticleEnsemble.uniform([[0.0]]), 0.1, 1e-3, solver="fv")
    with pytest.raises(InvalidArgumentError):
        fast_algorithm_flow(spec, GridDensity.uniform(-1, 1, 10), 0.1, 1e-3, solver="particles")
    with pytest.raises(InvalidArgumentError):
        fast_algorithm_flow(spec, GridDensity.uniform(-1, 1, 10), 0.1, 1e-3, solver="spectral")
