from __future__ import annotations

from typing import List, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, validator
from scipy.linalg import LinAlgError, eigh_tridiagonal

from ..core.exceptions import EigenSolverError, RegimeError
from ..core.grid import Grid, GridFunction, PotentialParams, potential_eval

EIGEN_RESIDUAL_TOL = 1e-8


class TridiagonalOperator(BaseModel):
    """
    Symmetric tridiagonal finite-difference operator on a grid
    """

    grid: Grid
    diagonal: np.ndarray
    off_diagonal: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @validator("off_diagonal")
    def shapes_must_match(cls, v: np.ndarray, values: dict, **kwargs):
        if "diagonal" in values and v.shape[0] != values["diagonal"].shape[0] - 1:
            raise ValueError("off diagonal must have one entry less than the diagonal")
        return v

    def apply(self, values: np.ndarray) -> np.ndarray:
        out = self.diagonal * values
        out[:-1] += self.off_diagonal * values[1:]
        out[1:] += self.off_diagonal * values[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.off_diagonal, 1) + np.diag(self.off_diagonal, -1)

    def banded(self, shift: complex = 0.0, scale: complex = 1.0) -> np.ndarray:
        """
        (3, n) banded storage of `shift * I + scale * A` for scipy.linalg.solve_banded
        """
        n = self.grid.n_points
        dtype = np.result_type(self.diagonal, shift, scale)
        ab = np.zeros((3, n), dtype=dtype)
        ab[0, 1:] = scale * self.off_diagonal
        ab[1, :] = shift + scale * self.diagonal
        ab[2, :-1] = scale * self.off_diagonal
        return ab


class LinearBasis(BaseModel):
    """
    Lowest eigenpairs of the linear operator and the left/right localized rotation
    """

    omega0: float
    omega1: float
    u0: GridFunction
    u1: GridFunction
    phiL: GridFunction
    phiR: GridFunction

    class Config:
        arbitrary_types_allowed = True

    @validator("omega1")
    def ordered_energies(cls, v: float, values: dict, **kwargs):
        if "omega0" in values and not values["omega0"] < v:
            raise ValueError(f"expected omega0 < omega1, got {values['omega0']}, {v}")
        return v

    @property
    def grid(self) -> Grid:
        return self.u0.grid

    @property
    def Omega(self) -> float:
        return 0.5 * (self.omega0 + self.omega1)

    @property
    def omega(self) -> float:
        return 0.5 * (self.omega1 - self.omega0)

    def swapped(self) -> LinearBasis:
        """Basis with the roles of the left and right states exchanged"""
        return LinearBasis(
            omega0=self.omega0, omega1=self.omega1, u0=self.u0, u1=self.u1, phiL=self.phiR, phiR=self.phiL
        )


def discretize_operator(grid: Grid, params: PotentialParams) -> TridiagonalOperator:
    """
    Second-order centered finite-difference matrix of -(1/2) d^2/dx^2 + V(x)
    with homogeneous Dirichlet boundaries
    """
    h2 = grid.spacing**2
    diagonal = 1.0 / h2 + potential_eval(params, grid.points)
    off_diagonal = np.full(grid.n_points - 1, -0.5 / h2)
    return TridiagonalOperator(grid=grid, diagonal=diagonal, off_diagonal=off_diagonal)


def _fix_sign(grid: Grid, v: np.ndarray, index: int) -> np.ndarray:
    c = grid.center
    if index % 2 == 0:
        reference = v[c]
    else:
        reference = v[c + 1] - v[c - 1]
    return -v if reference < 0 else v


def lowest_eigenpairs(operator: TridiagonalOperator, count: int = 2) -> List[Tuple[float, GridFunction]]:
    """
    The `count` algebraically smallest eigenpairs, L2 normalized on the grid

    Signs are fixed so that even-indexed modes are positive at x = 0 and odd-indexed modes
    have a positive slope at x = 0.
    """
    grid = operator.grid
    if count < 1 or count >= grid.n_points:
        raise ValueError(f"count must lie in [1, {grid.n_points - 1}], got {count}")

    try:
        energies, vectors = eigh_tridiagonal(
            operator.diagonal, operator.off_diagonal, select="i", select_range=(0, count - 1)
        )
    except LinAlgError as e:
        raise EigenSolverError(f"tridiagonal eigensolver failed: {e}")

    pairs: List[Tuple[float, GridFunction]] = []
    for idx in range(count):
        v = vectors[:, idx]
        v = v / np.sqrt(grid.norm(v))
        v = _fix_sign(grid, v, idx)

        residual = float(np.max(np.abs(operator.apply(v) - energies[idx] * v)))
        if residual > EIGEN_RESIDUAL_TOL:
            raise EigenSolverError(f"eigenpair {idx} has residual {residual:.3e}", residual=residual)

        pairs.append((float(energies[idx]), GridFunction(grid=grid, values=v)))

    logger.debug(f"Lowest eigenvalues: {[e for e, _ in pairs]}")
    return pairs


def rotated_basis(eigenpairs: List[Tuple[float, GridFunction]]) -> LinearBasis:
    """
    Build phi_L = (u0 - u1)/sqrt(2), phi_R = (u0 + u1)/sqrt(2) from the two lowest eigenpairs
    """
    if len(eigenpairs) != 2:
        raise RegimeError(f"the two-mode basis needs exactly two eigenpairs, got {len(eigenpairs)}")

    (omega0, u0), (omega1, u1) = eigenpairs
    if np.isclose(omega0, omega1, rtol=0.0, atol=1e-14):
        raise RegimeError(f"degenerate linear pair omega0 = omega1 = {omega0}")
    if omega0 > omega1:
        (omega0, u0), (omega1, u1) = (omega1, u1), (omega0, u0)

    phiL = u0.with_values((u0.values - u1.values) / np.sqrt(2.0))
    phiR = u0.with_values((u0.values + u1.values) / np.sqrt(2.0))
    return LinearBasis(omega0=omega0, omega1=omega1, u0=u0, u1=u1, phiL=phiL, phiR=phiR)


def linear_basis(grid: Grid, params: PotentialParams) -> LinearBasis:
    basis = rotated_basis(lowest_eigenpairs(discretize_operator(grid, params), 2))
    logger.info(f"Linear basis: omega0={basis.omega0:.6f}, omega1={basis.omega1:.6f}, omega={basis.omega:.6f}")
    return basis
