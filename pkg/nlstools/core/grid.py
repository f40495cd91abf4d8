from __future__ import annotations

from typing import Union

import numpy as np
from pydantic import BaseModel, validator

from .exceptions import GridError


class Grid(BaseModel):
    """
    Uniform 1D mesh, symmetric about x = 0

    Points are generated as `spacing * (i - center)` so that the center point is exactly 0
    and the mesh is exactly mirror symmetric
    """

    n_points: int
    spacing: float
    x_min: float
    x_max: float

    class Config:
        frozen = True
        extra = "forbid"

    @validator("n_points")
    def at_least_three_points(cls, v: int, values: dict, **kwargs):
        if v < 3 or v % 2 == 0:
            raise ValueError(f"a symmetric grid needs an odd number of points >= 3, got {v}")
        return v

    @validator("spacing")
    def spacing_must_be_positive(cls, v: float, values: dict, **kwargs):
        if v <= 0:
            raise ValueError("grid spacing must be positive")
        return v

    @validator("x_max")
    def grid_must_be_symmetric(cls, v: float, values: dict, **kwargs):
        if "x_min" in values and not np.isclose(values["x_min"], -v, rtol=1e-12, atol=1e-12):
            raise ValueError("grid must be symmetric about 0 (x_min = -x_max)")
        return v

    @property
    def center(self) -> int:
        """Index of the point x = 0"""
        return (self.n_points - 1) // 2

    @property
    def points(self) -> np.ndarray:
        return self.spacing * (np.arange(self.n_points) - self.center)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights"""
        w = np.full(self.n_points, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    def integrate(self, values: np.ndarray) -> Union[float, complex]:
        return self.weights @ values

    def inner(self, f: np.ndarray, g: np.ndarray) -> Union[float, complex]:
        """Discrete L2 inner product <f, g> = int conj(f) g dx"""
        return self.weights @ (np.conj(f) * g)

    def norm(self, values: np.ndarray) -> float:
        """N = int |f|^2 dx"""
        return float(self.weights @ np.abs(values) ** 2)

    def lattice_norm(self, values: np.ndarray) -> float:
        """h sum |f|^2, the quadratic invariant of the Cayley step on the Dirichlet operator"""
        return float(self.spacing * np.sum(np.abs(values) ** 2))

    def reflect(self, values: np.ndarray) -> np.ndarray:
        """f(x) -> f(-x)"""
        return values[::-1].copy()

    def left_mask(self) -> np.ndarray:
        return self.points < 0

    def right_mask(self) -> np.ndarray:
        return self.points > 0

    def __str__(self):
        return f"Grid(n_points={self.n_points}, spacing={self.spacing}, x=[{self.x_min}, {self.x_max}])"


class PotentialParams(BaseModel):
    """
    Double-well potential V(x) = (1/2) trap_strength^2 x^2 + barrier_height sech^2(x / barrier_width)
    """

    trap_strength: float = 0.1
    barrier_height: float = 1.0
    barrier_width: float = 0.5

    class Config:
        frozen = True
        extra = "forbid"

    @validator("trap_strength", "barrier_width")
    def must_be_positive(cls, v: float, values: dict, **kwargs):
        if v <= 0:
            raise ValueError("must be positive")
        return v


class GridFunction(BaseModel):
    """
    Samples of a real or complex field, one per grid point
    """

    grid: Grid
    values: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @validator("values", pre=True)
    def values_as_array(cls, v, values: dict, **kwargs):
        v = np.asarray(v)
        if v.ndim != 1:
            raise ValueError("grid function values must be one dimensional")
        if v.dtype.kind not in "fciu":
            raise ValueError(f"grid function values must be numeric, got {v.dtype}")
        if v.dtype.kind in "iu":
            v = v.astype(float)
        return v

    @validator("values")
    def length_must_match_grid(cls, v: np.ndarray, values: dict, **kwargs):
        grid = values.get("grid")
        if grid is not None and v.shape[0] != grid.n_points:
            raise ValueError(f"expected {grid.n_points} values, got {v.shape[0]}")
        return v

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def norm(self) -> float:
        return self.grid.norm(self.values)

    def inner(self, other: GridFunction) -> Union[float, complex]:
        check_same_grid(self, other)
        return self.grid.inner(self.values, other.values)

    def reflected(self) -> GridFunction:
        return GridFunction(grid=self.grid, values=self.grid.reflect(self.values))

    def with_values(self, values: np.ndarray) -> GridFunction:
        return GridFunction(grid=self.grid, values=values)

    def boundary_amplitude(self) -> float:
        return float(max(abs(self.values[0]), abs(self.values[-1])))


def check_same_grid(*functions: GridFunction) -> Grid:
    grid = functions[0].grid
    for f in functions[1:]:
        if f.grid != grid:
            raise GridError(f"grid mismatch: {f.grid} vs {grid}")
    return grid


def half_points(half_width: float, spacing: float) -> int:
    """
    Number m of points on each side of x = 0; half_width must be a whole multiple m >= 2 of spacing
    """
    if half_width <= 0 or spacing <= 0:
        raise GridError(f"half_width and spacing must be positive, got {half_width}, {spacing}")

    ratio = half_width / spacing
    m = int(round(ratio))
    if not np.isclose(ratio, m, rtol=1e-9, atol=1e-9):
        raise GridError(f"half_width={half_width} is not a whole multiple of spacing={spacing}")
    if m < 2:
        raise GridError(f"grid with half_width={half_width}, spacing={spacing} has fewer than 5 points")
    return m


def build_grid(half_width: float, spacing: float) -> Grid:
    """
    Build a symmetric uniform grid covering [-half_width, half_width]

    :param half_width: Half extent of the computational box
    :param spacing: Grid spacing dx
    """
    m = half_points(half_width, spacing)
    x_max = m * spacing
    return Grid(n_points=2 * m + 1, spacing=spacing, x_min=-x_max, x_max=x_max)


def potential_eval(params: PotentialParams, x):
    """
    Evaluate the double-well potential at `x` (scalar or array)
    """
    x = np.asarray(x, dtype=float)
    sech = 1.0 / np.cosh(x / params.barrier_width)
    v = 0.5 * params.trap_strength**2 * x**2 + params.barrier_height * sech**2
    return float(v) if v.ndim == 0 else v
