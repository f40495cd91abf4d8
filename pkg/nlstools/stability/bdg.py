from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel
from scipy.linalg import LinAlgError, eig, solve

from ..continuation.base import Branch, StationaryState
from ..core.config import RunConfig, StabilityConfig, max_workers
from ..core.exceptions import EigenSolverError
from ..core.grid import Grid, GridFunction
from ..core.model import NLSModel
from ..core.parity import asymmetry, parity_bases

QUARTET_TOL = 1e-8
REAL_TOL = 1e-14
BLOCK_TOL = 1e-8


class BdGOperator(BaseModel):
    """
    Linearization i lambda (U, V) = [[L1, L2], [-L2*, -L1*]] (U, V) about a stationary state psi

        L1 = H - mu + s K1|psi|^2 + delta K2|psi|^4 + s psi K1 psi* + 2 delta psi K2 |psi|^2 psi*
        L2 = s psi K1 psi + 2 delta psi K2 |psi|^2 psi

    where the last two terms of each line act as integral operators on the perturbation.
    """

    grid: Grid
    psi: np.ndarray
    mu: float
    L1: np.ndarray
    L2: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @property
    def n(self) -> int:
        return self.grid.n_points

    @property
    def is_real(self) -> bool:
        return bool(np.all(np.abs(np.imag(self.psi)) <= REAL_TOL * max(np.max(np.abs(self.psi)), 1.0)))

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.L1, self.L2], [-np.conj(self.L2), -np.conj(self.L1)]])

    def apply(self, U: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.L1 @ U + self.L2 @ V, -np.conj(self.L2) @ U - np.conj(self.L1) @ V

    @property
    def L_plus(self) -> np.ndarray:
        return np.real(self.L1 + self.L2)

    @property
    def L_minus(self) -> np.ndarray:
        return np.real(self.L1 - self.L2)


class BdGSpectrum(BaseModel):
    eigenvalues: np.ndarray
    threshold: float = 1e-6

    class Config:
        arbitrary_types_allowed = True

    @property
    def max_real_part(self) -> float:
        return float(np.max(self.eigenvalues.real)) if self.eigenvalues.size else 0.0

    @property
    def unstable_count(self) -> int:
        return int(np.sum(self.eigenvalues.real > self.threshold))

    @property
    def stable(self) -> bool:
        return self.max_real_part <= self.threshold

    @property
    def min_abs(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    def quartet_defect(self) -> float:
        """
        Largest distance from -lambda, conj(lambda) and -conj(lambda) to the spectrum
        """
        lam = self.eigenvalues
        defect = 0.0
        for image in (-lam, np.conj(lam), -np.conj(lam)):
            distance = np.min(np.abs(image[:, None] - lam[None, :]), axis=1)
            defect = max(defect, float(np.max(distance)))
        return defect

    def as_row(self) -> dict:
        return {"max_re_lambda": self.max_real_part, "unstable_count": self.unstable_count}


def build_bdg_at(model: NLSModel, psi: np.ndarray, mu: float) -> BdGOperator:
    psi = np.asarray(psi)
    density = np.abs(psi) ** 2
    L1 = model.H - mu * np.eye(model.n)
    L1[np.diag_indices(model.n)] += model.nonlinear_potential(psi)
    L1 = L1 + model.s * psi[:, None] * model.K1 * np.conj(psi)[None, :]
    L1 = L1 + 2.0 * model.delta * psi[:, None] * model.K2 * (density * np.conj(psi))[None, :]
    L2 = model.s * psi[:, None] * model.K1 * psi[None, :]
    L2 = L2 + 2.0 * model.delta * psi[:, None] * model.K2 * (density * psi)[None, :]
    return BdGOperator(grid=model.grid, psi=psi, mu=float(mu), L1=L1, L2=L2)


def build_bdg(state: Union[StationaryState, GridFunction], model: Union[NLSModel, RunConfig], mu: Optional[float] = None) -> BdGOperator:
    """
    Discrete block operator about a stationary state with every direct and exchange term
    """
    if not isinstance(model, NLSModel):
        model = NLSModel.from_config(model)
    if isinstance(state, StationaryState):
        if state.residual > 1e-10:
            logger.warning(f"Linearizing about a state with residual {state.residual:.2e} at mu={state.mu}")
        return build_bdg_at(model, state.values, state.mu)
    if mu is None:
        raise ValueError("mu is required when linearizing about a bare grid function")
    return build_bdg_at(model, state.values, mu)


def _blocks(operator: BdGOperator) -> List[np.ndarray]:
    """Parity bases when the state has definite parity, otherwise the identity"""
    psi = np.real(operator.psi)
    if min(asymmetry(operator.grid, psi, 1), asymmetry(operator.grid, psi, -1)) <= BLOCK_TOL:
        return list(parity_bases(operator.grid))
    return [np.eye(operator.n)]


def _gauge_refined(nu: np.ndarray, vectors: np.ndarray, Lp: np.ndarray, Lm: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """
    Replace the eigenvalue belonging to the phase mode with <L- psi, psi> / <psi, L+^-1 psi>
    """
    if not np.any(psi):
        return nu
    try:
        w = solve(Lp, psi)
    except LinAlgError:
        return nu
    denominator = psi @ w
    if denominator == 0.0:
        return nu
    overlaps = np.abs(np.conj(vectors).T @ w) / (np.linalg.norm(vectors, axis=0) * np.linalg.norm(w))
    k = int(np.argmax(overlaps))
    nu = nu.copy()
    nu[k] = ((Lm @ psi) @ psi) / denominator
    return nu


def _real_state_spectrum(operator: BdGOperator) -> np.ndarray:
    """
    lambda^2 = -nu with nu the eigenvalues of L- L+, per parity block when the state has one
    """
    psi = np.real(operator.psi)
    Lp, Lm = operator.L_plus, operator.L_minus
    eigenvalues = []
    for Q in _blocks(operator):
        Lp_q, Lm_q, psi_q = Q.T @ Lp @ Q, Q.T @ Lm @ Q, Q.T @ psi
        try:
            nu, vectors = eig(Lm_q @ Lp_q)
        except LinAlgError as e:
            raise EigenSolverError(f"BdG block eigensolve failed at mu={operator.mu}: {e}")
        if np.linalg.norm(psi_q) > 1e-12 * max(np.linalg.norm(psi), 1e-300):
            nu = _gauge_refined(nu, vectors, Lp_q, Lm_q, psi_q)
        lam = np.sqrt(-nu.astype(complex))
        eigenvalues.extend([lam, -lam])
    return np.concatenate(eigenvalues)


def solve_bdg(operator: BdGOperator, threshold: float = 1e-6) -> BdGSpectrum:
    """
    Eigenvalues lambda of the linearization; real states go through the parity blocks of
    L- L+, complex ones through the full block matrix
    """
    if operator.is_real:
        eigenvalues = _real_state_spectrum(operator)
    else:
        try:
            values = eig(operator.matrix, right=False)
        except LinAlgError as e:
            raise EigenSolverError(f"BdG eigensolve failed at mu={operator.mu}: {e}")
        eigenvalues = -1j * values

    if not np.all(np.isfinite(eigenvalues)):
        raise EigenSolverError(f"non-finite BdG eigenvalues at mu={operator.mu}")

    spectrum = BdGSpectrum(eigenvalues=eigenvalues, threshold=threshold)
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    defect = spectrum.quartet_defect()
    if defect > QUARTET_TOL * scale:
        logger.warning(f"BdG spectrum at mu={operator.mu} breaks the quartet symmetry by {defect:.2e}")
    return spectrum


def unstable_mode(operator: BdGOperator, threshold: float = 1e-6) -> Optional[Tuple[float, np.ndarray]]:
    """
    Growth rate and complex field perturbation of the most unstable real mode of a real state

    For an eigenvector a of L- L+ with eigenvalue -lambda^2 the field perturbation
    a - i L+ a / lambda grows as exp(lambda t). Returns None when no real pair exceeds `threshold`.
    """
    psi = np.real(operator.psi)
    Lp, Lm = operator.L_plus, operator.L_minus
    best = None
    for Q in _blocks(operator):
        nu, vectors = eig(Q.T @ Lm @ Q @ (Q.T @ Lp @ Q))
        real = np.abs(nu.imag) <= 1e-10 * max(1.0, float(np.max(np.abs(nu))))
        for k in np.flatnonzero(real & (nu.real < -(threshold**2))):
            lam = float(np.sqrt(-nu[k].real))
            if best is None or lam > best[0]:
                best = (lam, Q @ np.real(vectors[:, k]))
    if best is None:
        return None

    lam, a = best
    perturbation = a - 1j * (Lp @ a) / lam
    return lam, perturbation / np.sqrt(operator.grid.norm(perturbation))


def two_mode_lambda_check(state: StationaryState, spectrum: BdGSpectrum, lambda_sq: float, tol: float = 1e-3) -> Dict:
    """
    Compare the PDE growth rate with sqrt(lambda^2) of the two-mode fixed point
    """
    pde_rate = max(spectrum.max_real_part, 0.0)
    reduced_rate = float(np.sqrt(lambda_sq)) if lambda_sq > 0 else 0.0
    pde_unstable = pde_rate > spectrum.threshold
    reduced_unstable = reduced_rate > tol
    relative = None
    if pde_unstable and reduced_unstable:
        relative = abs(pde_rate - reduced_rate) / reduced_rate
    return {
        "mu": state.mu,
        "N": state.norm,
        "pde_rate": pde_rate,
        "two_mode_rate": reduced_rate,
        "lambda_sq": lambda_sq,
        "relative_difference": relative,
        "classification_agrees": pde_unstable == reduced_unstable,
    }


def state_stability(state: StationaryState, model: NLSModel, config: Optional[StabilityConfig] = None) -> BdGSpectrum:
    config = config or StabilityConfig()
    spectrum = solve_bdg(build_bdg(state, model), config.threshold)
    state.n_unstable = spectrum.unstable_count
    state.max_re_lambda = spectrum.max_real_part
    return spectrum


def branch_spectra(branch: Branch, model: NLSModel, config: Optional[StabilityConfig] = None) -> List[BdGSpectrum]:
    """
    Solve the BdG problem on every state of a branch; fills n_unstable and max_re_lambda in place
    """
    config = config or StabilityConfig()
    with ThreadPoolExecutor(max_workers=max_workers()) as executor:
        spectra: List[BdGSpectrum] = list(executor.map(lambda s: state_stability(s, model, config), branch.states))
    logger.info(f"Stability of {len(spectra)} states on {branch.label}: {sum(not s.stable for s in spectra)} unstable")
    return spectra


def sweep_frame(branch: Branch, spectra: List[BdGSpectrum]) -> pd.DataFrame:
    return pd.DataFrame.from_dict(
        [{"mu": state.mu, "N": state.norm, **spectrum.as_row()} for state, spectrum in zip(branch.states, spectra)]
    )


def stability_sweep(branch: Branch, model: NLSModel, config: Optional[StabilityConfig] = None) -> pd.DataFrame:
    """(mu, N, max_re_lambda, unstable_count) per state of a branch"""
    return sweep_frame(branch, branch_spectra(branch, model, config))
