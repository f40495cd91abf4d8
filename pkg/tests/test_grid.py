import numpy as np
import pytest
from pydantic import ValidationError

from nlstools.core.exceptions import GridError
from nlstools.core.grid import Grid, GridFunction, PotentialParams, build_grid, check_same_grid, potential_eval
from nlstools.core.parity import asymmetry, imbalance, parity_bases


@pytest.fixture(scope="module")
def grid():
    return build_grid(10.0, 0.1)


def test_build_grid_is_symmetric(grid):
    x = grid.points
    assert grid.n_points == 201
    assert x[grid.center] == 0.0
    assert np.array_equal(x, -x[::-1])
    assert x[0] == pytest.approx(-10.0)


def test_build_grid_rejects_bad_arguments():
    with pytest.raises(GridError):
        build_grid(-1.0, 0.1)
    with pytest.raises(GridError):
        build_grid(1.0, 0.0)
    with pytest.raises(GridError):
        build_grid(0.01, 1.0)


@pytest.mark.parametrize("half_width,spacing", [(0.1, 0.1), (1.0, 1.0), (1.05, 0.1), (10.0, 0.3)])
def test_build_grid_needs_a_whole_number_of_points(half_width, spacing):
    with pytest.raises(GridError):
        build_grid(half_width, spacing)


def test_build_grid_smallest_box():
    grid = build_grid(0.2, 0.1)
    assert grid.n_points == 5
    assert grid.x_max == pytest.approx(0.2)


def test_grid_needs_odd_point_count():
    with pytest.raises(ValidationError):
        Grid(n_points=4, spacing=0.1, x_min=-0.15, x_max=0.15)
    with pytest.raises(ValidationError):
        Grid(n_points=5, spacing=0.1, x_min=-0.1, x_max=0.3)


def test_trapezoid_quadrature(grid):
    assert grid.integrate(np.exp(-grid.points**2)) == pytest.approx(np.sqrt(np.pi), rel=1e-10)
    assert grid.norm(np.exp(-0.5 * grid.points**2)) == pytest.approx(np.sqrt(np.pi), rel=1e-10)


def test_reflection_is_an_involution(grid, faker):
    rng = np.random.default_rng(faker.random_int(0, 10_000))
    values = rng.standard_normal(grid.n_points)
    f = GridFunction(grid=grid, values=values)
    assert np.array_equal(f.reflected().reflected().values, values)
    assert f.reflected().norm() == pytest.approx(f.norm())


def test_grid_function_length_must_match(grid):
    with pytest.raises(ValidationError):
        GridFunction(grid=grid, values=np.zeros(grid.n_points - 1))
    with pytest.raises(ValidationError):
        GridFunction(grid=grid, values=["a"] * grid.n_points)


def test_integer_values_become_float(grid):
    f = GridFunction(grid=grid, values=np.ones(grid.n_points, dtype=int))
    assert f.values.dtype.kind == "f"
    assert not f.is_complex


def test_grid_mismatch(grid):
    other = build_grid(5.0, 0.1)
    f = GridFunction(grid=grid, values=np.zeros(grid.n_points))
    g = GridFunction(grid=other, values=np.zeros(other.n_points))
    with pytest.raises(GridError):
        check_same_grid(f, g)
    with pytest.raises(GridError):
        f.inner(g)


def test_potential_is_even_with_barrier_at_center(grid):
    params = PotentialParams()
    v = potential_eval(params, grid.points)
    assert potential_eval(params, 0.0) == pytest.approx(1.0)
    assert np.allclose(v, v[::-1], rtol=0.0, atol=1e-14)
    assert potential_eval(params, 10.0) == pytest.approx(0.5 * 0.01 * 100.0, rel=1e-6)


def test_potential_params_validation():
    with pytest.raises(ValidationError):
        PotentialParams(trap_strength=0.0)
    with pytest.raises(ValidationError):
        PotentialParams(barrier_width=-1.0)


def test_parity_bases_are_orthonormal(grid):
    even, odd = parity_bases(grid)
    Q = np.hstack([even, odd])
    assert Q.shape == (grid.n_points, grid.n_points)
    assert np.allclose(Q.T @ Q, np.eye(grid.n_points), atol=1e-14)
    assert np.allclose(even, even[::-1], atol=0.0)
    assert np.allclose(odd, -odd[::-1], atol=0.0)


def test_asymmetry_and_imbalance(grid):
    x = grid.points
    bump = np.exp(-((x - 4.0) ** 2))
    even = bump + bump[::-1]
    odd = bump - bump[::-1]
    assert asymmetry(grid, even, 1) == pytest.approx(0.0, abs=1e-14)
    assert asymmetry(grid, odd, -1) == pytest.approx(0.0, abs=1e-14)
    assert asymmetry(grid, bump, 1) > 0.5

    assert imbalance(grid, even) == pytest.approx(0.0, abs=1e-14)
    assert imbalance(grid, bump) == pytest.approx(-1.0, abs=1e-6)
    assert imbalance(grid, bump[::-1]) == pytest.approx(1.0, abs=1e-6)
    assert imbalance(grid, np.zeros_like(x)) == 0.0
