import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coupledwgf.errors import InvalidArgumentError
from coupledwgf.measures import (
    DiracState,
    GridDensity,
    ParticleEnsemble,
    histogram,
    load_ensemble_csv,
    load_grid_csv,
    moment2,
    sample_gaussian,
    save_ensemble_csv,
    save_grid_csv,
)
from oracles import gaussian_cell_averages

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_moment2_two_points():
    assert moment2(ParticleEnsemble.uniform([[0.0], [2.0]])) == 2.0


def test_moment2_origin():
    assert moment2(ParticleEnsemble([[0.0, 0.0]], [1.0])) == 0.0


def test_moment2_gaussian_grid():
    g = GridDensity(-8, 8, gaussian_cell_averages(-8, 8, 400))
    # midpoint rule on cell averages adds h²/12 to the variance
    assert abs(moment2(g) - 1.0) < 1e-3
    assert moment2(g) == pytest.approx(1.0 + (16 / 400) ** 2 / 12, abs=1e-9)


def test_dirac_moment():
    assert moment2(DiracState([3.0, 4.0])) == 25.0


def test_zero_weights_dropped():
    e = ParticleEnsemble([[1.0], [2.0], [3.0]], [0.5, 0.0, 0.5])
    assert e.size == 2
    assert np.all(e.weights > 0)


@pytest.mark.parametrize("w", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0]])
def test_bad_weights(w):
    with pytest.raises(InvalidArgumentError):
        ParticleEnsemble([[0.0], [1.0]], w)


def test_bad_grid():
    with pytest.raises(InvalidArgumentError):
        GridDensity(1.0, 0.0, [1.0])
    with pytest.raises(InvalidArgumentError):
        GridDensity(0.0, 1.0, [0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        GridDensity(0.0, 1.0, [1.0, -1.0])
    with pytest.raises(InvalidArgumentError):
        DiracState([np.inf])


def test_grid_normalizes():
    g = GridDensity(0.0, 2.0, [3.0, 1.0])
    assert g.h * g.values.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(g.values, [0.75, 0.25])


def test_sample_gaussian_mean():
    e = sample_gaussian([0.0], [1.0], 100_000, seed=7)
    assert abs(e.mean()[0]) < 0.02


def test_sample_gaussian_moment():
    e = sample_gaussian([54.0], [10.0], 100_000, seed=1)
    assert moment2(e) == pytest.approx(54**2 + 10, rel=0.01)


def test_sample_single():
    e = sample_gaussian([1.0, 2.0], [1.0, 1.0], 1, seed=0)
    assert e.size == 1 and e.weights[0] == 1.0


def test_sample_errors():
    with pytest.raises(InvalidArgumentError):
        sample_gaussian([0.0], [1.0], 0, seed=0)
    with pytest.raises(InvalidArgumentError):
        sample_gaussian([0.0], [0.0], 5, seed=0)


def test_sample_reproducible():
    a = sample_gaussian([0.0, 1.0], [1.0, 2.0], 50, seed=3)
    b = sample_gaussian([0.0, 1.0], [1.0, 2.0], 50, seed=3)
    assert np.array_equal(a.points, b.points)


def test_histogram_tie_goes_left():
    g = histogram(ParticleEnsemble([[0.0]], [1.0]), -1, 1, 2)
    assert np.array_equal(g.values, [1.0, 0.0])


def test_histogram_two_points():
    g = histogram(ParticleEnsemble.uniform([[-0.5], [0.5]]), -1, 1, 2)
    assert np.allclose(g.values, [0.5, 0.5])


def test_histogram_gaussian_l1():
    e = sample_gaussian([0.0], [1.0], 100_000, seed=5)
    g = histogram(e, -6, 6, 240)
    exact = gaussian_cell_averages(-6, 6, 240)
    l1 = g.h * np.abs(g.values - exact).sum()
    # E|m̂ − m| ≈ √(2m/(πn)) per cell, summed
    expected = np.sum(np.sqrt(2 * g.h * exact / (np.pi * 100_000)))
    assert l1 < np.sqrt(240 / 100_000)
    assert 0.8 * expected < l1 < 1.25 * expected


def test_histogram_clips_outside():
    g = histogram(ParticleEnsemble.uniform([[-5.0], [5.0]]), -1, 1, 4)
    assert np.allclose(g.masses, [0.5, 0, 0, 0.5])


def test_histogram_errors():
    with pytest.raises(InvalidArgumentError):
        histogram(ParticleEnsemble.uniform([[0.0]]), 1, 0, 4)
    with pytest.raises(InvalidArgumentError):
        histogram(ParticleEnsemble.uniform([[0.0]]), 0, 1, 1)


@given(arrays(float, st.integers(1, 40), elements=finite))
def test_histogram_mass(pts):
    g = histogram(ParticleEnsemble.uniform(pts[:, None]), -10, 10, 37)
    assert abs(g.h * g.values.sum() - 1.0) < 1e-10


def test_histogram_moment_refinement():
    rng = np.random.default_rng(2)
    e = ParticleEnsemble.uniform(rng.uniform(-1, 1, (2000, 1)))
    exact = moment2(e)
    err = [abs(moment2(histogram(e, -1, 1, n)) - exact) for n in (50, 100, 200)]
    # error halves per refinement up to a factor 4
    for coarse, fine in zip(err, err[1:]):
        assert fine < coarse * 0.5 * 4


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    w = rng.random(7)
    w /= w.sum()
    e = ParticleEnsemble(rng.normal(size=(7, 2)), w)
    back = load_ensemble_csv(save_ensemble_csv(e, tmp_path / "e.csv"))
    assert np.array_equal(back.points, e.points) and np.array_equal(back.weights, e.weights)
    g = GridDensity(-1.3, 2.7, rng.random(11))
    gb = load_grid_csv(save_grid_csv(g, tmp_path / "g.csv"))
    assert np.array_equal(gb.values, g.values) and (gb.lo, gb.hi) == (g.lo, g.hi)


def test_immutable():
    e = ParticleEnsemble.uniform([[0.0], [1.0]])
    with pytest.raises(ValueError):
        e.points[0, 0] = 5.0
