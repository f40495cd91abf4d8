from __future__ import annotations

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, validator
from scipy.linalg import toeplitz
from scipy.signal import fftconvolve

from .exceptions import KernelError
from .grid import Grid, GridFunction


class KernelFamily(str, Enum):
    gaussian = "gaussian"
    exponential = "exponential"
    delta = "delta"


class Kernel(BaseModel):
    """
    Nonlocal response kernel R(x) with range `sigma`

    The gaussian and exponential families integrate to 1 over the real line;
    the delta family is the local limit and is only meaningful inside a convolution
    """

    family: KernelFamily = KernelFamily.gaussian
    sigma: Optional[float] = 1.0

    class Config:
        frozen = True
        extra = "forbid"

    @validator("sigma", always=True)
    def sigma_required_for_nonlocal(cls, v: Optional[float], values: dict, **kwargs):
        family = values.get("family")
        if family is not None and family != KernelFamily.delta:
            if v is None or v <= 0:
                raise ValueError(f"{family.value} kernel needs a positive range sigma, got {v}")
        return v

    @property
    def is_local(self) -> bool:
        return self.family == KernelFamily.delta

    def __str__(self):
        if self.is_local:
            return "delta"
        return f"{self.family.value}(sigma={self.sigma})"


def kernel_eval(k: Kernel, x):
    """
    Pointwise kernel density R(x)
    """
    x = np.asarray(x, dtype=float)
    if k.family == KernelFamily.gaussian:
        r = np.exp(-((x / k.sigma) ** 2)) / (k.sigma * np.sqrt(np.pi))
    elif k.family == KernelFamily.exponential:
        r = np.exp(-np.abs(x) / k.sigma) / (2.0 * k.sigma)
    else:
        raise KernelError("the delta kernel has no pointwise value, use convolve instead")
    return float(r) if r.ndim == 0 else r


def kernel_masses(k: Kernel, grid: Grid) -> np.ndarray:
    """
    Discrete kernel weights for offsets -(n-1) ... (n-1)

    Weights are the pointwise kernel samples normalized to unit discrete mass. For a kernel
    much wider than the spacing this is the trapezoid rule; for a kernel much narrower than
    the spacing it tends to the identity.
    """
    n = grid.n_points
    if k.is_local:
        masses = np.zeros(2 * n - 1)
        masses[n - 1] = 1.0
        return masses

    offsets = grid.spacing * np.arange(-(n - 1), n)
    if k.family == KernelFamily.gaussian:
        r = np.exp(-((offsets / k.sigma) ** 2))
    else:
        r = np.exp(-np.abs(offsets) / k.sigma)
    return r / r.sum()


def convolve(k: Kernel, f: GridFunction) -> GridFunction:
    """
    Discrete approximation of int R(x - x') f(x') dx' at every grid point

    Fields outside the box are taken as zero; the parabolic trap breaks periodicity
    so no wrap-around is ever used.
    """
    if k.is_local:
        return f.with_values(f.values.copy())

    masses = kernel_masses(k, f.grid)
    out = fftconvolve(f.values, masses, mode="same")
    if not f.is_complex:
        out = np.real(out)
    return f.with_values(out)


def convolve_values(k: Kernel, grid: Grid, values: np.ndarray) -> np.ndarray:
    return convolve(k, GridFunction(grid=grid, values=values)).values


def kernel_matrix(k: Kernel, grid: Grid) -> np.ndarray:
    """
    Dense symmetric Toeplitz matrix K with (K f)_i = sum_j R_{i-j} f_j
    """
    if k.is_local:
        return np.eye(grid.n_points)
    masses = kernel_masses(k, grid)
    return toeplitz(masses[grid.n_points - 1 :])
