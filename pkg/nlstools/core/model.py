from __future__ import annotations

from typing import Optional

import numpy as np

from ..spectrum.linear import TridiagonalOperator, discretize_operator
from .config import RunConfig
from .grid import Grid, PotentialParams
from .kernel import Kernel, kernel_matrix


class NLSModel:
    """
    Discretized nonlocal cubic-quintic equation

        mu psi = H psi + s (K1 |psi|^2) psi + delta (K2 |psi|^4) psi

    with H the finite-difference linear operator and K1, K2 the dense kernel matrices.
    Everything is built once; the object is read-only afterwards.
    """

    def __init__(
        self,
        grid: Grid,
        potential: PotentialParams,
        kernel1: Kernel,
        kernel2: Optional[Kernel] = None,
        s: int = 1,
        delta: int = -1,
    ):
        self.grid = grid
        self.potential = potential
        self.kernel1 = kernel1
        self.kernel2 = kernel2 if kernel2 is not None else kernel1
        self.s = s
        self.delta = delta

        self.operator: TridiagonalOperator = discretize_operator(grid, potential)
        self.H = self.operator.to_dense()
        self.K1 = kernel_matrix(self.kernel1, grid)
        self.K2 = kernel_matrix(self.kernel2, grid)

    @classmethod
    def from_config(cls, config: RunConfig) -> NLSModel:
        k1, k2 = config.kernels
        return cls(config.build_grid(), config.potential, k1, k2, config.s, config.delta)

    @property
    def n(self) -> int:
        return self.grid.n_points

    def conv1(self, values: np.ndarray) -> np.ndarray:
        return values if self.kernel1.is_local else self.K1 @ values

    def conv2(self, values: np.ndarray) -> np.ndarray:
        return values if self.kernel2.is_local else self.K2 @ values

    def nonlinear_potential(self, psi: np.ndarray) -> np.ndarray:
        """W = s K1 |psi|^2 + delta K2 |psi|^4 (real)"""
        density = np.abs(psi) ** 2
        return self.s * self.conv1(density) + self.delta * self.conv2(density**2)

    def apply_linear(self, psi: np.ndarray) -> np.ndarray:
        return self.operator.apply(psi)

    def residual(self, psi: np.ndarray, mu: float) -> np.ndarray:
        return self.apply_linear(psi) - mu * psi + self.nonlinear_potential(psi) * psi

    def jacobian(self, psi: np.ndarray, mu: float) -> np.ndarray:
        """
        Frechet derivative of the residual for real psi

            H - mu + diag(W) + 2 s diag(psi) K1 diag(psi) + 4 delta diag(psi) K2 diag(psi^3)
        """
        J = self.H - mu * np.eye(self.n)
        J[np.diag_indices(self.n)] += self.nonlinear_potential(psi)
        J += 2.0 * self.s * psi[:, None] * self.K1 * psi[None, :]
        J += 4.0 * self.delta * psi[:, None] * self.K2 * (psi**3)[None, :]
        return J
