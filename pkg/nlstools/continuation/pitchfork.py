from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import LinAlgError, eig, eigvals

from ..core.config import RunConfig
from ..core.exceptions import ContinuationError, ConvergenceError, EigenSolverError
from ..core.model import NLSModel
from ..core.parity import parity_bases
from .base import Branch, BranchEvent, EventType, StationaryState
from .newton import ParitySubspace, bordered_newton, fixed_mu_newton, inner, make_state

MAX_BISECTIONS = 60
KICK_FACTORS = (1.0, 10.0, 100.0)


def symmetry_breaking_block(model: NLSModel, psi: np.ndarray, mu: float, parity: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Jacobian restricted to the subspace of parity opposite to the state, and that subspace's basis

    Zero eigenvalues of this block are the parity-breaking (pitchfork) directions.
    """
    even, odd = parity_bases(model.grid)
    Q = even if parity == -1 else odd
    return Q.T @ model.jacobian(psi, mu) @ Q, Q


def negative_count(model: NLSModel, psi: np.ndarray, mu: float, parity: int) -> int:
    """
    Number of eigenvalues with negative real part in the symmetry-breaking block

    The count changes by one each time a real eigenvalue crosses zero.
    """
    block, _ = symmetry_breaking_block(model, psi, mu, parity)
    try:
        values = eigvals(block)
    except LinAlgError as e:
        raise EigenSolverError(f"symmetry-breaking block eigensolve failed at mu={mu}: {e}")
    return int(np.sum(values.real < 0))


def critical_vector(model: NLSModel, psi: np.ndarray, mu: float, parity: int) -> np.ndarray:
    """
    Eigenvector of the symmetry-breaking block closest to the zero eigenvalue, on the grid,
    normalized to h v.v = 1
    """
    block, Q = symmetry_breaking_block(model, psi, mu, parity)
    values, vectors = eig(block)
    k = int(np.argmin(np.abs(values)))
    v = Q @ np.real(vectors[:, k])
    return v / np.sqrt(model.grid.spacing * (v @ v))


def _point_between(
    space: ParitySubspace, left: StationaryState, right: StationaryState, tau: float, config: RunConfig
) -> Tuple[np.ndarray, float]:
    """
    Corrected state at fraction tau of the step from `left` to `right`

    Follows the arclength parameterization of `left` when it carries a tangent and
    interpolates in mu otherwise.
    """
    a_left, a_right = space.restrict(left.values), space.restrict(right.values)
    if left.tangent is not None:
        X_left = np.append(a_left, left.mu)
        ds = tau * (right.arclength - left.arclength)
        X, _ = bordered_newton(space, X_left + ds * left.tangent, left.tangent, X_left, ds, config.newton)
        return space.lift(X[:-1]), float(X[-1])
    mu = left.mu + tau * (right.mu - left.mu)
    coords, _ = fixed_mu_newton(space, (1.0 - tau) * a_left + tau * a_right, mu, config.newton)
    return space.lift(coords), mu


def refine_pitchfork(
    model: NLSModel, left: StationaryState, right: StationaryState, config: RunConfig
) -> StationaryState:
    """
    Bisect between two consecutive states whose symmetry-breaking counts differ until
    the bracket is narrower than `config.continuation.bisection_tol` in mu
    """
    parity = left.parity
    space = ParitySubspace(model, parity)
    count_left = left.n_negative if left.n_negative is not None else negative_count(model, left.values, left.mu, parity)

    lo, hi = 0.0, 1.0
    mu_lo, mu_hi = left.mu, right.mu
    psi_mid, mu_mid = left.values, left.mu
    for _ in range(MAX_BISECTIONS):
        if abs(mu_hi - mu_lo) <= config.continuation.bisection_tol or hi - lo < 1e-12:
            break
        mid = 0.5 * (lo + hi)
        psi_mid, mu_mid = _point_between(space, left, right, mid, config)
        if negative_count(model, psi_mid, mu_mid, parity) == count_left:
            lo, mu_lo = mid, mu_mid
        else:
            hi, mu_hi = mid, mu_mid

    tau = 0.5 * (lo + hi)
    psi, mu = _point_between(space, left, right, tau, config)
    return make_state(
        model,
        psi,
        mu,
        arclength=left.arclength + tau * (right.arclength - left.arclength),
        tangent=left.tangent,
    )


def locate_pitchforks(
    branch: Branch, model: NLSModel, config: RunConfig
) -> List[Tuple[BranchEvent, StationaryState]]:
    """
    Pitchfork events of a parity branch together with the refined critical states
    """
    if len(branch) < 3 or branch.states[0].parity is None:
        return []

    parity = branch.states[0].parity
    for state in branch.states:
        if state.n_negative is None:
            state.n_negative = negative_count(model, state.values, state.mu, parity)

    found = []
    for i, (left, right) in enumerate(zip(branch.states[:-1], branch.states[1:])):
        if left.n_negative == right.n_negative:
            continue
        try:
            critical = refine_pitchfork(model, left, right, config)
        except ConvergenceError as e:
            logger.warning(f"Could not refine the pitchfork between mu={left.mu:.5f} and mu={right.mu:.5f}: {e}")
            critical = left
        event = BranchEvent(
            type=EventType.pitchfork,
            mu=critical.mu,
            N=critical.norm,
            index=i,
            parent=branch.family,
            note=f"symmetry-breaking count {left.n_negative} -> {right.n_negative}",
        )
        logger.info(f"Pitchfork on {branch.label} at mu={event.mu:.5f}, N={event.N:.4f}")
        found.append((event, critical))
    return found


def detect_pitchfork(branch: Branch, model: NLSModel, config: RunConfig) -> List[BranchEvent]:
    return [event for event, _ in locate_pitchforks(branch, model, config)]


def seed_daughter(
    model: NLSModel, critical: StationaryState, config: RunConfig, parity: Optional[int] = None
) -> StationaryState:
    """
    Asymmetric state next to a pitchfork, with its projection on the critical eigenvector
    pinned to kick * ||psi||

    The kick is retried ten and a hundred times larger when Newton fails. The returned
    state carries the secant from the critical state as its tangent.
    """
    parity = parity if parity is not None else critical.parity
    if parity is None:
        raise ValueError("daughters are seeded from states of definite parity")

    v = critical_vector(model, critical.values, critical.mu, parity)
    space = ParitySubspace(model)
    X_star = np.append(critical.values, critical.mu)
    direction = np.append(v, 0.0)
    h = model.grid.spacing

    for factor in KICK_FACTORS:
        a = config.continuation.kick * factor * np.sqrt(critical.norm)
        try:
            X, history = bordered_newton(space, X_star + a * direction, direction, X_star, a, config.newton)
        except ConvergenceError as e:
            logger.debug(f"Daughter seed with kick {a:.2e} failed: {e}")
            continue
        secant = X - X_star
        state = make_state(
            model,
            X[:-1],
            X[-1],
            iterations=len(history) - 1,
            arclength=0.0,
            tangent=secant / np.sqrt(inner(h, secant, secant)),
        )
        if state.parity is None:
            logger.info(f"Seeded asymmetric daughter at mu={state.mu:.5f}, N={state.norm:.4f}")
            return state
        logger.debug(f"Daughter seed with kick {a:.2e} fell back to a {state.symmetry.value} state")

    raise ContinuationError(f"could not seed a daughter branch at mu={critical.mu:.5f}")
