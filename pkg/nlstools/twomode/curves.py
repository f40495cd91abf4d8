from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.optimize import brentq

from ..core.config import Symmetry
from ..core.exceptions import RegimeError
from ..core.kernel import Kernel, KernelFamily
from ..spectrum.linear import LinearBasis
from ..spectrum.overlaps import Regime, RegimeThresholds, compute_overlaps
from .params import ModeParams, mode_params
from .system import asymmetric_mu, branch_mu, critical_norms


def params_at_sigma(
    basis: LinearBasis,
    family: KernelFamily,
    sigma: float,
    s: int,
    delta: int,
    thresholds: Optional[RegimeThresholds] = None,
    regime: Optional[Regime] = None,
) -> ModeParams:
    k = Kernel(family=family, sigma=sigma)
    overlaps = compute_overlaps(basis, k, k, thresholds)
    return mode_params(basis, overlaps, s, delta, regime=regime)


def critical_norm_curve(
    basis: LinearBasis,
    family: KernelFamily,
    sigmas: Sequence[float],
    s: int,
    delta: int,
    thresholds: Optional[RegimeThresholds] = None,
) -> pd.DataFrame:
    """
    N0cr ... N3cr as functions of the kernel range, with the parent-branch mu at each
    """
    rows = []
    for sigma in sigmas:
        p = params_at_sigma(basis, family, float(sigma), s, delta, thresholds)
        norms = critical_norms(p)
        row = {"sigma": float(sigma), "regime": p.regime.value}
        for name, parent in (
            ("N0cr", Symmetry.symmetric),
            ("N1cr", Symmetry.symmetric),
            ("N2cr", Symmetry.antisymmetric),
            ("N3cr", Symmetry.antisymmetric),
        ):
            N = getattr(norms, name)
            row[name] = N
            row[f"mu_{name}"] = branch_mu(N, p, parent) if N is not None else None
        rows.append(row)
    return pd.DataFrame(rows)


def coalescence_discriminant(p: ModeParams) -> float:
    """eta^2 - 8 eta4 w: the two same-sign critical norms merge where this vanishes"""
    return p.eta**2 - 8.0 * p.eta4 * p.omega


def coalescence_sigma(
    basis: LinearBasis,
    family: KernelFamily,
    s: int,
    delta: int,
    sigma_min: float = 0.1,
    sigma_max: float = 12.0,
    n_scan: int = 120,
    thresholds: Optional[RegimeThresholds] = None,
) -> float:
    """
    Kernel range where the bracketing pair of critical norms coalesces
    """

    def disc(sigma: float) -> float:
        return coalescence_discriminant(params_at_sigma(basis, family, sigma, s, delta, thresholds))

    sigmas = np.linspace(sigma_min, sigma_max, n_scan)
    values = np.array([disc(sigma) for sigma in sigmas])
    changes = np.nonzero(np.sign(values[:-1]) != np.sign(values[1:]))[0]
    if changes.size == 0:
        raise RegimeError(f"critical norms do not coalesce for sigma in [{sigma_min}, {sigma_max}]")

    idx = changes[0]
    sigma = brentq(disc, sigmas[idx], sigmas[idx + 1], xtol=1e-10)
    logger.info(f"Critical norms coalesce at sigma={sigma:.4f}")
    return sigma


def branch_curves(p: ModeParams, norms: Sequence[float]) -> pd.DataFrame:
    """
    mu(N), lambda^2(N) and z(N) of the three fixed-point families along a norm sweep
    (NaN where a family does not exist)
    """
    N = np.asarray(norms, dtype=float)
    f = p.s * p.eta * N + p.delta * p.eta4 * N**2
    w = p.omega

    with np.errstate(divide="ignore", invalid="ignore"):
        z_sq = 1.0 - 4.0 * w**2 / f**2
    exists = z_sq >= -1e-12

    return pd.DataFrame(
        {
            "N": N,
            "mu_symmetric": branch_mu(N, p, Symmetry.symmetric),
            "mu_antisymmetric": branch_mu(N, p, Symmetry.antisymmetric),
            "mu_asymmetric": asymmetric_mu(N, p),
            "lambda_sq_symmetric": -2.0 * w * (f + 2.0 * w),
            "lambda_sq_antisymmetric": 2.0 * w * (f - 2.0 * w),
            "lambda_sq_asymmetric": np.where(exists, -(f**2 - 4.0 * w**2), np.nan),
            "z_asymmetric": np.where(exists, np.sqrt(np.clip(z_sq, 0.0, None)), np.nan),
        }
    )


def existence_intervals(p: ModeParams, norms: Sequence[float]) -> List[Tuple[float, float]]:
    """
    Norm intervals of a sweep on which asymmetric fixed points exist, i.e. f(N)^2 >= 4 w^2

    Interior endpoints are refined with brentq between the bracketing samples; an interval still
    open at either end of the sweep keeps that sweep endpoint.
    """
    N = np.asarray(norms, dtype=float)
    if N.size < 2:
        raise ValueError("an existence sweep needs at least two norms")

    def gap(n: float) -> float:
        f = p.s * p.eta * n + p.delta * p.eta4 * n**2
        return f**2 - 4.0 * p.omega**2

    inside = np.array([gap(n) >= 0.0 for n in N])
    intervals: List[Tuple[float, float]] = []
    start = float(N[0]) if inside[0] else None
    for i in np.nonzero(inside[:-1] != inside[1:])[0]:
        edge = brentq(gap, N[i], N[i + 1], xtol=1e-12)
        if inside[i + 1]:
            start = edge
        else:
            intervals.append((start, edge))
            start = None
    if start is not None:
        intervals.append((start, float(N[-1])))
    return intervals
