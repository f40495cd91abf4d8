from __future__ import annotations

from typing import List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy.linalg import LinAlgError, solve

from ..core.config import NewtonConfig, RunConfig, Symmetry
from ..core.exceptions import ConvergenceError, GridError, TrivialSolutionError
from ..core.grid import GridFunction
from ..core.model import NLSModel
from ..core.parity import parity_bases
from ..spectrum.linear import LinearBasis
from .base import StationaryState, classify_symmetry

SEED_NORM = 1e-3


def as_model(model: Union[NLSModel, RunConfig]) -> NLSModel:
    return model if isinstance(model, NLSModel) else NLSModel.from_config(model)


class ParitySubspace:
    """
    Coordinates of grid vectors inside the even (parity=1) or odd (parity=-1) subspace

    The basis columns are orthonormal, so Euclidean and trapezoid inner products of the
    coordinates agree with those of the lifted vectors up to the boundary weights, which
    vanish on decayed profiles. parity=None is the full space.
    """

    def __init__(self, model: NLSModel, parity: Optional[int] = None):
        self.model = model
        self.parity = parity
        if parity is None:
            self.P = None
        else:
            even, odd = parity_bases(model.grid)
            self.P = even if parity == 1 else odd

    @property
    def dim(self) -> int:
        return self.model.n if self.P is None else self.P.shape[1]

    def restrict(self, vector: np.ndarray) -> np.ndarray:
        return vector if self.P is None else self.P.T @ vector

    def lift(self, coords: np.ndarray) -> np.ndarray:
        return coords if self.P is None else self.P @ coords

    def residual(self, coords: np.ndarray, mu: float) -> Tuple[np.ndarray, float]:
        """Reduced residual and the max-norm of the full one"""
        F = self.model.residual(self.lift(coords), mu)
        return self.restrict(F), float(np.max(np.abs(F)))

    def jacobian(self, coords: np.ndarray, mu: float) -> np.ndarray:
        J = self.model.jacobian(self.lift(coords), mu)
        return J if self.P is None else self.P.T @ J @ self.P


def inner(h: float, t1: np.ndarray, t2: np.ndarray) -> float:
    """Continuation inner product h <psi1, psi2> + mu1 mu2 on stacked (coords, mu) vectors"""
    return float(h * (t1[:-1] @ t2[:-1]) + t1[-1] * t2[-1])


def fixed_mu_newton(
    space: ParitySubspace, coords: np.ndarray, mu: float, config: NewtonConfig
) -> Tuple[np.ndarray, List[float]]:
    history: List[float] = []
    for iteration in range(config.max_iter + 1):
        F, res = space.residual(coords, mu)
        history.append(res)
        logger.debug(f"Newton mu={mu:.6f} iteration {iteration}: residual {res:.3e}")

        if res <= config.tol:
            try:
                coords = coords - solve(space.jacobian(coords, mu), F)
            except LinAlgError:
                pass
            return coords, history
        if not np.isfinite(res):
            raise ConvergenceError(f"Newton diverged at mu={mu}", history=history)
        if iteration == config.max_iter:
            break

        try:
            coords = coords - solve(space.jacobian(coords, mu), F)
        except LinAlgError as e:
            raise ConvergenceError(f"singular Jacobian at mu={mu}: {e}", history=history)

    raise ConvergenceError(f"Newton did not converge at mu={mu} after {config.max_iter} iterations", history=history)


def bordered_newton(
    space: ParitySubspace,
    guess: np.ndarray,
    direction: np.ndarray,
    reference: np.ndarray,
    target: float,
    config: NewtonConfig,
) -> Tuple[np.ndarray, List[float]]:
    """
    Newton iteration on the stacked unknown X = (coords, mu) for

        F(coords, mu) = 0,    <direction, X - reference> = target

    With direction the branch tangent and target the step length this is the
    pseudo-arclength corrector; with direction = (v, 0) it pins the projection
    of the state onto v, which is how daughter branches are seeded.
    """
    h = space.model.grid.spacing
    X = np.array(guess, dtype=float)
    border = np.append(h * direction[:-1], direction[-1])

    history: List[float] = []
    for iteration in range(config.max_iter + 1):
        coords, mu = X[:-1], X[-1]
        F, res = space.residual(coords, mu)
        g = inner(h, direction, X - reference) - target
        history.append(res)
        logger.debug(f"Bordered Newton iteration {iteration}: residual {res:.3e}, constraint {g:.3e}")

        converged = res <= config.tol and abs(g) <= config.tol
        if not np.isfinite(res):
            raise ConvergenceError("bordered Newton diverged", history=history)
        if iteration == config.max_iter and not converged:
            break

        M = np.empty((space.dim + 1, space.dim + 1))
        M[:-1, :-1] = space.jacobian(coords, mu)
        M[:-1, -1] = -coords
        M[-1] = border
        try:
            X = X - solve(M, np.append(F, g))
        except LinAlgError as e:
            if converged:
                return X, history
            raise ConvergenceError(f"singular bordered system: {e}", history=history)
        if converged:
            return X, history

    raise ConvergenceError(f"bordered Newton did not converge after {config.max_iter} iterations", history=history)


def branch_tangent(space: ParitySubspace, X: np.ndarray, previous: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Unit tangent of the solution curve at X in the continuation inner product

    Without a previous tangent the mu component is fixed to 1 and the result is oriented
    so that the norm increases; otherwise it is oriented along `previous`.
    """
    h = space.model.grid.spacing
    coords, mu = X[:-1], X[-1]
    J = space.jacobian(coords, mu)
    if previous is None:
        t = np.append(solve(J, coords), 1.0)
        if coords @ t[:-1] < 0:
            t = -t
    else:
        M = np.empty((space.dim + 1, space.dim + 1))
        M[:-1, :-1] = J
        M[:-1, -1] = -coords
        M[-1] = np.append(h * previous[:-1], previous[-1])
        rhs = np.zeros(space.dim + 1)
        rhs[-1] = 1.0
        t = solve(M, rhs)
    return t / np.sqrt(inner(h, t, t))


def stationary_residual(psi: GridFunction, mu: float, model: Union[NLSModel, RunConfig]) -> GridFunction:
    """
    H psi - mu psi + s (K1 |psi|^2) psi + delta (K2 |psi|^4) psi at every grid point
    """
    model = as_model(model)
    if psi.grid != model.grid:
        raise GridError(f"profile lives on {psi.grid}, the model on {model.grid}")
    return psi.with_values(model.residual(psi.values, mu))


def make_state(model: NLSModel, psi: np.ndarray, mu: float, iterations: int = 0, **kwargs) -> StationaryState:
    gf = GridFunction(grid=model.grid, values=psi)
    symmetry, defect = classify_symmetry(gf)
    return StationaryState(
        psi=gf,
        mu=float(mu),
        norm=model.grid.norm(psi),
        symmetry=symmetry,
        residual=float(np.max(np.abs(model.residual(psi, mu)))),
        iterations=iterations,
        asymmetry=defect,
        **kwargs,
    )


def newton_solve(
    guess: GridFunction,
    mu: float,
    model: Union[NLSModel, RunConfig],
    config: Optional[NewtonConfig] = None,
    allow_trivial: bool = False,
    parity: Optional[int] = None,
) -> StationaryState:
    """
    Solve the stationary equation at fixed mu by Newton iteration on the dense Jacobian

    Iterates until the max-norm residual drops below `config.tol`, then takes one extra
    step to push the residual down to rounding level.

    :param allow_trivial: Accept convergence to psi = 0 instead of raising TrivialSolutionError
    :param parity: Restrict the iteration to the even (1) or odd (-1) subspace
    """
    model = as_model(model)
    config = config or NewtonConfig()
    if guess.grid != model.grid:
        raise GridError(f"guess lives on {guess.grid}, the model on {model.grid}")
    psi = np.array(np.real(guess.values), dtype=float)
    if not allow_trivial and not np.any(psi):
        raise ValueError("newton_solve needs a nonzero guess")

    space = ParitySubspace(model, parity)
    coords, history = fixed_mu_newton(space, space.restrict(psi), mu, config)
    psi = space.lift(coords)

    norm = model.grid.norm(psi)
    if norm < config.trivial_norm and not allow_trivial:
        raise TrivialSolutionError(f"Newton collapsed to the trivial solution at mu={mu} (N={norm:.2e})", history=history)

    state = make_state(model, psi, mu, iterations=len(history) - 1)
    if state.boundary_flagged:
        logger.warning(f"State at mu={mu} has not decayed at the box boundary ({state.psi.boundary_amplitude():.2e})")
    return state


def seed_guess(
    model: NLSModel, basis: LinearBasis, family: Symmetry, norm: float = SEED_NORM
) -> Tuple[GridFunction, float]:
    """
    Small-amplitude guess a u_k with a^2 = norm and the first-order estimate of mu

        mu = omega_k + s a^2 <u^2, K1 u^2> + delta a^4 <u^2, K2 u^4>
    """
    if family == Symmetry.symmetric:
        omega_k, u = basis.omega0, basis.u0.values
    elif family == Symmetry.antisymmetric:
        omega_k, u = basis.omega1, basis.u1.values
    else:
        raise ValueError("only symmetric and antisymmetric branches are seeded from linear modes")

    grid = model.grid
    mu = (
        omega_k
        + model.s * norm * grid.integrate(u**2 * model.conv1(u**2))
        + model.delta * norm**2 * grid.integrate(u**2 * model.conv2(u**4))
    )
    return GridFunction(grid=grid, values=np.sqrt(norm) * u), float(mu)


def seed_state(
    model: NLSModel,
    basis: LinearBasis,
    family: Symmetry,
    config: Optional[NewtonConfig] = None,
    norm: float = SEED_NORM,
) -> StationaryState:
    guess, mu = seed_guess(model, basis, family, norm)
    state = newton_solve(guess, mu, model, config, parity=1 if family == Symmetry.symmetric else -1)
    logger.info(f"Seeded {family.value} branch at mu={state.mu:.6f}, N={state.norm:.3e}")
    return state
