from __future__ import annotations

from typing import Tuple

import numpy as np

from .grid import Grid


def parity_bases(grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orthonormal bases (columns) of the even and odd subspaces of grid vectors

    Even: e_c and (e_{c+k} + e_{c-k}) / sqrt(2); odd: (e_{c+k} - e_{c-k}) / sqrt(2), k = 1 ... c,
    where c is the index of x = 0.
    """
    n, c = grid.n_points, grid.center
    even = np.zeros((n, c + 1))
    odd = np.zeros((n, c))
    even[c, 0] = 1.0
    r = 1.0 / np.sqrt(2.0)
    for k in range(1, c + 1):
        even[c + k, k] = even[c - k, k] = r
        odd[c + k, k - 1] = r
        odd[c - k, k - 1] = -r
    return even, odd


def asymmetry(grid: Grid, psi: np.ndarray, sign: int) -> float:
    """
    ||psi(x) - sign psi(-x)|| / ||psi||; zero for an even (sign=+1) or odd (sign=-1) field
    """
    total = np.sqrt(grid.norm(psi))
    if total == 0.0:
        return 0.0
    return float(np.sqrt(grid.norm(psi - sign * grid.reflect(psi))) / total)


def imbalance(grid: Grid, psi: np.ndarray) -> float:
    """
    Signed population imbalance (N_left - N_right) / N, with x = 0 in neither half
    """
    density = grid.weights * np.abs(psi) ** 2
    total = density.sum()
    if total == 0.0:
        return 0.0
    return float((density[grid.left_mask()].sum() - density[grid.right_mask()].sum()) / total)
