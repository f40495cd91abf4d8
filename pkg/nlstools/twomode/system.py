"""
Reduced two-mode dynamics in the population imbalance z and the relative phase theta

    dz/dt     = 2 w sqrt(1 - z^2) sin(theta)
    dtheta/dt = -2 w z cos(theta) / sqrt(1 - z^2) - f(N) z

with f(N) = s eta N + delta eta4 N^2 and Hamiltonian H = 2 w sqrt(1 - z^2) cos(theta) - f z^2 / 2,
so that dz/dt = -dH/dtheta and dtheta/dt = dH/dz.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel

from ..core.config import Symmetry
from ..core.exceptions import FixedPointError, SingularityError
from ..spectrum.overlaps import Regime
from .params import CriticalNorms, FixedPoint, ModeParams, StabilityType, TwoModeState

FIXED_POINT_TOL = 1e-10


def reduced_rhs(state: TwoModeState, p: ModeParams) -> Tuple[float, float]:
    z, theta = state.z, state.theta
    if abs(z) >= 1.0:
        raise SingularityError(f"|z| = {abs(z)} reaches the phase singularity", z=z, theta=theta)

    root = np.sqrt(1.0 - z**2)
    zdot = 2.0 * p.omega * root * np.sin(theta)
    thetadot = -2.0 * p.omega * z * np.cos(theta) / root - p.nonlinearity() * z
    return float(zdot), float(thetadot)


def hamiltonian(state: TwoModeState, p: ModeParams) -> float:
    z, theta = state.z, state.theta
    return float(2.0 * p.omega * np.sqrt(max(1.0 - z**2, 0.0)) * np.cos(theta) - 0.5 * p.nonlinearity() * z**2)


def position_momentum_rhs(z: float, pz: float, p: ModeParams, branch: int = 1) -> Tuple[float, float]:
    """
    Second-order form: dz/dt = p, dp/dt = -4 w^2 z - f z branch sqrt(4 w^2 (1 - z^2) - p^2)

    :param branch: sign of cos(theta) along the orbit
    """
    radicand = 4.0 * p.omega**2 * (1.0 - z**2) - pz**2
    return pz, float(-4.0 * p.omega**2 * z - p.nonlinearity() * z * branch * np.sqrt(max(radicand, 0.0)))


def asymmetric_theta(p: ModeParams) -> float:
    """Stationarity of theta puts asymmetric states at theta = pi for f > 0 and theta = 0 for f < 0"""
    return np.pi if p.nonlinearity() > 0 else 0.0


def asymmetric_z(p: ModeParams) -> List[TwoModeState]:
    """
    The asymmetric pair (+z, theta), (-z, theta) with z^2 = 1 - 4 w^2 / f^2; empty if z^2 < 0
    """
    f = p.nonlinearity()
    if f == 0.0:
        return []
    z_sq = 1.0 - 4.0 * p.omega**2 / f**2
    if z_sq < -1e-12:
        return []
    z = float(np.sqrt(max(z_sq, 0.0)))
    theta = asymmetric_theta(p)
    return [TwoModeState(z=z, theta=theta), TwoModeState(z=-z, theta=theta)]


def lambda_sq_at(state: TwoModeState, p: ModeParams) -> float:
    """
    lambda^2 of the linearization at a fixed point (sin theta = 0)

        lambda^2 = -4 w^2 / (1 - z^2) - 2 w f cos(theta) sqrt(1 - z^2)
    """
    z = state.z
    c = np.cos(state.theta)
    return float(-4.0 * p.omega**2 / (1.0 - z**2) - 2.0 * p.omega * p.nonlinearity() * c * np.sqrt(1.0 - z**2))


def fixed_point_stability(fp: FixedPoint, p: ModeParams) -> Tuple[float, StabilityType]:
    residual = float(np.max(np.abs(reduced_rhs(fp.state, p))))
    if residual > FIXED_POINT_TOL:
        raise FixedPointError(f"({fp.state.z}, {fp.state.theta}) is not a fixed point", residual=residual)

    lambda_sq = lambda_sq_at(fp.state, p)
    return lambda_sq, StabilityType.saddle if lambda_sq > 0 else StabilityType.center


def fixed_points(p: ModeParams) -> List[FixedPoint]:
    """
    Census of the fixed points in the theta in {0, pi} section, with their stability
    """
    states = [
        (TwoModeState(z=0.0, theta=0.0), Symmetry.symmetric),
        (TwoModeState(z=0.0, theta=np.pi), Symmetry.antisymmetric),
    ]
    states += [(state, Symmetry.asymmetric) for state in asymmetric_z(p) if state.z != 0.0]

    census: List[FixedPoint] = []
    for state, family in states:
        fp = FixedPoint(state=state, family=family)
        lambda_sq, kind = fixed_point_stability(fp, p)
        census.append(FixedPoint(state=state, family=family, stability=kind, lambda_sq=lambda_sq))
    return census


def _quadratic_roots(a: float, b: float, c: float) -> List[Optional[float]]:
    """Real roots of a N^2 + b N + c = 0 in ascending order, [None, None] when complex"""
    disc = b**2 - 4.0 * a * c
    if disc < 0:
        return [None, None]
    root = np.sqrt(disc)
    return sorted([(-b - root) / (2.0 * a), (-b + root) / (2.0 * a)])


def critical_norms(p: ModeParams) -> CriticalNorms:
    """
    Norms where z^2 = 0, i.e. f(N) = -2 w (N0cr, N1cr) or f(N) = +2 w (N2cr, N3cr)

    Without the quintic overlap (case3) each equation is linear and its single root takes the lower slot.
    """
    roots = {}
    for names, target in ((("N0cr", "N1cr"), -2.0 * p.omega), (("N2cr", "N3cr"), 2.0 * p.omega)):
        if p.eta4 == 0.0:
            pair = [target / (p.s * p.eta) if p.eta != 0 else None, None]
        else:
            pair = _quadratic_roots(p.delta * p.eta4, p.s * p.eta, -target)
        for name, value in zip(names, pair):
            roots[name] = float(value) if value is not None and value > 0 else None
    return CriticalNorms(**roots)


def branch_mu(N, p: ModeParams, family: Symmetry):
    """
    Chemical potential of the symmetric or antisymmetric two-mode branch at norm N = 2 rho^2
    """
    if family == Symmetry.asymmetric:
        return asymmetric_mu(N, p)
    omega_k = p.omega0 if family == Symmetry.symmetric else p.omega1
    N = np.asarray(N, dtype=float)
    mu = omega_k + p.s * p.eta_a * N / 2.0 + p.delta * p.eta4 * N**2 / 4.0
    return float(mu) if mu.ndim == 0 else mu


def asymmetric_mu(N, p: ModeParams):
    """
    mu = Omega + s eta0 N + delta eta4 N^2 - delta eta4 N^2 w^2 / f^2, NaN where no asymmetric state exists
    """
    N = np.asarray(N, dtype=float)
    f = p.s * p.eta * N + p.delta * p.eta4 * N**2
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = p.Omega + p.s * p.eta0 * N + p.delta * p.eta4 * N**2 - p.delta * p.eta4 * N**2 * p.omega**2 / f**2
        exists = 4.0 * p.omega**2 <= f**2 * (1.0 + 1e-12)
    mu = np.where(exists, mu, np.nan)
    return float(mu) if mu.ndim == 0 else mu


def existence_bound(p: ModeParams, family: Symmetry) -> Optional[float]:
    """
    Limit on mu for real z = 0 amplitudes: upper bound for delta = -1, lower bound for delta = +1
    """
    if p.eta4 == 0.0:
        return None
    omega_k = p.omega0 if family == Symmetry.symmetric else p.omega1
    return omega_k - p.delta * p.eta_a**2 / (4.0 * p.eta4)


def stationary_amplitudes(p: ModeParams, family: Symmetry) -> List[Tuple[float, float]]:
    """
    Real non-negative (rho_L^2, rho_R^2) of the z = 0 states at chemical potential p.mu

    Solves delta eta4 rho^4 + s eta_a rho^2 + (omega_k - mu) = 0 with omega_k = omega0 (symmetric)
    or omega1 (antisymmetric).
    """
    if family == Symmetry.asymmetric:
        raise ValueError("use asymmetric_norm_polynomial for the asymmetric family")
    if p.mu is None:
        raise ValueError("stationary amplitudes need the chemical potential mu")

    omega_k = p.omega0 if family == Symmetry.symmetric else p.omega1
    a, b, c = p.delta * p.eta4, p.s * p.eta_a, omega_k - p.mu

    if a == 0.0:
        candidates = [-c / b] if b != 0 else []
    else:
        candidates = [r for r in _quadratic_roots(a, b, c) if r is not None]

    amplitudes = []
    for rho_sq in candidates:
        if rho_sq < -1e-14:
            continue
        rho_sq = max(float(rho_sq), 0.0)
        amplitudes.append((rho_sq, rho_sq))

    bound = existence_bound(p, family)
    if not amplitudes and bound is not None:
        logger.debug(f"No {family.value} amplitudes at mu={p.mu}, existence bound {bound}")
    return amplitudes


def projected_residual(cL: complex, cR: complex, p: ModeParams) -> Tuple[complex, complex]:
    """
    Residual of the stationary projected equations

        (Omega - mu) c_L - w c_R + s c_L (eta0 |c_L|^2 + eta1 |c_R|^2) + delta eta4 |c_L|^4 c_L
    """
    if p.mu is None:
        raise ValueError("the projected equations need the chemical potential mu")

    def rhs(a: complex, b: complex) -> complex:
        return (
            (p.Omega - p.mu) * a
            - p.omega * b
            + p.s * a * (p.eta0 * abs(a) ** 2 + p.eta1 * abs(b) ** 2)
            + p.delta * p.eta4 * abs(a) ** 4 * a
        )

    return rhs(cL, cR), rhs(cR, cL)


class QuarticReport(BaseModel):
    """
    Asymmetric-state norm polynomial, highest power first
    """

    coefficients: List[float]
    real_roots: List[float]
    accepted: List[float]
    discarded: int
    printed: Optional[List[float]] = None
    mismatched_powers: List[int] = []


def _derived_quartic(p: ModeParams, m: float) -> np.ndarray:
    # (delta eta4 N^2 + s eta0 N - m) (delta eta4 N + s eta)^2 - delta eta4 w^2
    first = np.array([p.delta * p.eta4, p.s * p.eta0, -m])
    second = np.array([p.delta * p.eta4, p.s * p.eta])
    poly = np.polymul(first, np.polymul(second, second))
    poly[-1] -= p.delta * p.eta4 * p.omega**2
    return poly


def _printed_quartic(p: ModeParams, m: float) -> Optional[np.ndarray]:
    s, d, e4, w = p.s, p.delta, p.eta4, p.omega
    if p.regime == Regime.case1:
        e0 = p.eta0
        return np.array(
            [
                d**3 * e4**3,
                3 * s * e4**2 * e0,
                3 * d * e4 * e0**2 - e4**2 * m,
                s**3 * e0**3 - 2 * s * d * e0 * e4 * m,
                -d * e4 * w**2 - e0**2 * m,
            ]
        )
    if p.regime == Regime.case2:
        e, e1 = p.eta, p.eta1
        return np.array(
            [
                d**3 * e4**3,
                3 * s * e4**2 * e - s * e4**2 * e1,
                3 * d * e4 * e**2 - e4**2 * m - 2 * d * e4 * e * e1,
                s**3 * e**3 - 2 * s * d * e * e4 * m - s * e1 * e4**2,
                -d * e4 * w**2 - e**2 * m,
            ]
        )
    return None


def asymmetric_norm_polynomial(p: ModeParams) -> QuarticReport:
    """
    Quartic in N whose positive roots are the norms of the asymmetric states at chemical potential p.mu

    Roots are kept when they are real, positive and back-substitute to 0 <= z^2 <= 1; the
    printed-form coefficients are carried along and any power where they disagree with the
    derived polynomial is listed in `mismatched_powers`.
    """
    if p.mu is None:
        raise ValueError("the asymmetric norm polynomial needs the chemical potential mu")

    m = p.mu - p.Omega
    coefficients = _derived_quartic(p, m)

    real_roots: List[float] = []
    if np.any(coefficients[:-1] != 0.0):
        for root in np.roots(coefficients):
            if abs(root.imag) <= 1e-9 * max(1.0, abs(root.real)):
                real_roots.append(float(root.real))

    accepted: List[float] = []
    for N in sorted(real_roots):
        if N <= 0:
            continue
        f = p.nonlinearity(N)
        if f == 0.0:
            continue
        z_sq = 1.0 - 4.0 * p.omega**2 / f**2
        if -1e-10 <= z_sq <= 1.0:
            accepted.append(N)
    discarded = len(real_roots) - len(accepted)
    if discarded:
        logger.debug(f"Discarded {discarded} quartic root(s) at mu={p.mu}")

    printed = _printed_quartic(p, m)
    mismatched: List[int] = []
    if printed is not None:
        scale = np.max(np.abs(coefficients)) or 1.0
        for k, (a, b) in enumerate(zip(coefficients, printed)):
            if abs(a - b) > 1e-10 * scale:
                mismatched.append(4 - k)
        if mismatched:
            logger.warning(f"Printed {p.regime.value} quartic differs from the derived one at powers {mismatched}")

    return QuarticReport(
        coefficients=[float(c) for c in coefficients],
        real_roots=real_roots,
        accepted=accepted,
        discarded=discarded,
        printed=None if printed is None else [float(c) for c in printed],
        mismatched_powers=mismatched,
    )


def bifurcation_mu(p: ModeParams) -> Dict[str, Tuple[float, float]]:
    """
    Parent-branch chemical potential at each critical norm: N0cr/N1cr lie on the symmetric
    branch, N2cr/N3cr on the antisymmetric one. Returns {name: (N, mu)}.
    """
    norms = critical_norms(p)
    parents = {
        "N0cr": Symmetry.symmetric,
        "N1cr": Symmetry.symmetric,
        "N2cr": Symmetry.antisymmetric,
        "N3cr": Symmetry.antisymmetric,
    }
    out = {}
    for name, family in parents.items():
        N = getattr(norms, name)
        if N is not None:
            out[name] = (N, branch_mu(N, p, family))
    return out
