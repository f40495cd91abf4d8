from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, validator
from scipy.optimize import brentq

from ..core.config import max_workers
from ..core.exceptions import RegimeError
from ..core.grid import Grid
from ..core.kernel import Kernel, KernelFamily, convolve_values
from .linear import LinearBasis

N_ETA = 12


class Regime(str, Enum):
    case1 = "case1_eta0_eta4"
    case2 = "case2_eta0_eta1_eta4"
    case3 = "case3_eta0_eta1"


# (kernel slot, source mode product f, weight mode product g): eta_i = int g(x) (R * f)(x) dx
_Product = Callable[[np.ndarray, np.ndarray], np.ndarray]
ETA_DEFINITIONS: List[Tuple[int, _Product, _Product]] = [
    (1, lambda L, R: L**2, lambda L, R: L**2),
    (1, lambda L, R: L**2, lambda L, R: R**2),
    (1, lambda L, R: L**2, lambda L, R: L * R),
    (1, lambda L, R: L * R, lambda L, R: L * R),
    (2, lambda L, R: L**4, lambda L, R: L**2),
    (2, lambda L, R: L**4, lambda L, R: R**2),
    (2, lambda L, R: L**4, lambda L, R: L * R),
    (2, lambda L, R: L**2 * R**2, lambda L, R: L**2),
    (2, lambda L, R: L**2 * R**2, lambda L, R: L * R),
    (2, lambda L, R: L**3 * R, lambda L, R: L**2),
    (2, lambda L, R: L**3 * R, lambda L, R: R**2),
    (2, lambda L, R: L**3 * R, lambda L, R: L * R),
]


class RegimeThresholds(BaseModel):
    sigma_b: float
    sigma_c: float
    kernel_family: KernelFamily

    @validator("sigma_c")
    def thresholds_ordered(cls, v: float, values: dict, **kwargs):
        if "sigma_b" in values and not 0 < values["sigma_b"] < v:
            raise ValueError(f"expected 0 < sigma_b < sigma_c, got {values['sigma_b']}, {v}")
        return v


class OverlapSet(BaseModel):
    """
    The twelve overlap integrals eta_0 ... eta_11 for one kernel range
    """

    eta: np.ndarray
    sigma: Optional[float]
    kernel_family: KernelFamily
    regime: Optional[Regime] = None

    class Config:
        arbitrary_types_allowed = True

    @validator("eta")
    def twelve_finite_values(cls, v: np.ndarray, values: dict, **kwargs):
        v = np.asarray(v, dtype=float)
        if v.shape != (N_ETA,):
            raise ValueError(f"expected {N_ETA} overlap integrals, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("overlap integrals must be finite")
        return v

    def __getitem__(self, index: int) -> float:
        return float(self.eta[index])

    def as_row(self) -> dict:
        row = {"sigma": self.sigma}
        row.update({f"eta{i}": float(value) for i, value in enumerate(self.eta)})
        row["regime"] = self.regime.value if self.regime else None
        return row


def compute_overlaps(
    basis: LinearBasis, k1: Kernel, k2: Kernel, thresholds: Optional[RegimeThresholds] = None
) -> OverlapSet:
    """
    Each eta_i is computed as one convolution followed by a trapezoid quadrature;
    eta_0 ... eta_3 use `k1`, eta_4 ... eta_11 use `k2`
    """
    grid: Grid = basis.grid
    L, R = basis.phiL.values, basis.phiR.values
    kernels = {1: k1, 2: k2}

    eta = np.empty(N_ETA)
    for i, (slot, f, g) in enumerate(ETA_DEFINITIONS):
        smoothed = convolve_values(kernels[slot], grid, f(L, R))
        eta[i] = grid.integrate(g(L, R) * smoothed)

    sigma = None if k1.is_local else k1.sigma
    regime = classify_regime(sigma, thresholds) if thresholds is not None and sigma is not None else None
    return OverlapSet(eta=eta, sigma=sigma, kernel_family=k1.family, regime=regime)


def eta_rel(overlaps: OverlapSet, which: str = "eta1") -> float:
    """
    Relative strength of eta_1 or eta_4 against the largest mixed term max(|eta_2|, |eta_3|)
    """
    if which not in ("eta1", "eta4"):
        raise ValueError(f"which must be 'eta1' or 'eta4', got {which}")
    index = 1 if which == "eta1" else 4
    return overlaps[index] - max(abs(overlaps[2]), abs(overlaps[3]))


def classify_regime(sigma: float, thresholds: RegimeThresholds) -> Regime:
    if sigma <= 0:
        raise RegimeError(f"kernel range must be positive, got {sigma}")
    if sigma < thresholds.sigma_b:
        return Regime.case1
    elif sigma < thresholds.sigma_c:
        return Regime.case2
    return Regime.case3


def _overlaps_at(basis: LinearBasis, family: KernelFamily, sigma: float) -> OverlapSet:
    k = Kernel(family=family, sigma=sigma)
    return compute_overlaps(basis, k, k)


def sweep_overlaps(
    basis: LinearBasis,
    family: KernelFamily,
    sigmas: Sequence[float],
    thresholds: Optional[RegimeThresholds] = None,
) -> pd.DataFrame:
    """
    Overlap integrals over a range of sigma (shared by both kernels), one row per sigma
    """
    workers = max_workers()

    def row(sigma: float) -> dict:
        k = Kernel(family=family, sigma=float(sigma))
        return compute_overlaps(basis, k, k, thresholds).as_row()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, sigmas))
    else:
        rows = [row(sigma) for sigma in sigmas]
    return pd.DataFrame(rows)


def _first_crossing(fn: Callable[[float], float], sigmas: np.ndarray, rising: bool) -> float:
    values = np.array([fn(s) for s in sigmas])
    hits = np.nonzero(values >= 0)[0] if rising else np.nonzero(values <= 0)[0]
    if hits.size == 0:
        raise RegimeError(f"no crossing found for sigma in [{sigmas[0]}, {sigmas[-1]}]")
    idx = hits[0]
    if idx == 0:
        raise RegimeError(f"crossing lies below the scanned range, sigma <= {sigmas[0]}")
    return brentq(fn, sigmas[idx - 1], sigmas[idx], xtol=1e-10)


def regime_thresholds(
    basis: LinearBasis,
    family: KernelFamily,
    sigma_min: float = 0.1,
    sigma_max: float = 20.0,
    n_scan: int = 80,
    level: float = 0.01,
) -> RegimeThresholds:
    """
    Recompute sigma_b (first sigma with eta_rel(eta1) >= level) and sigma_c (first sigma with
    eta_rel(eta4) <= level) by scanning and refining each crossing with brentq
    """
    sigmas = np.linspace(sigma_min, sigma_max, n_scan)

    def rel1(sigma: float) -> float:
        return eta_rel(_overlaps_at(basis, family, sigma), "eta1") - level

    def rel4(sigma: float) -> float:
        return eta_rel(_overlaps_at(basis, family, sigma), "eta4") - level

    sigma_b = _first_crossing(rel1, sigmas, rising=True)
    sigma_c = _first_crossing(rel4, sigmas, rising=False)
    if not sigma_b < sigma_c:
        raise RegimeError(f"eta1 becomes relevant (sigma_b={sigma_b:.4f}) only after eta4 fades (sigma_c={sigma_c:.4f})")
    logger.info(f"Regime thresholds ({family.value}): sigma_b={sigma_b:.4f}, sigma_c={sigma_c:.4f}")
    return RegimeThresholds(sigma_b=sigma_b, sigma_c=sigma_c, kernel_family=family)
