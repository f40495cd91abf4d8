from __future__ import annotations

from typing import List, Optional

import numpy as np
from loguru import logger

from ..core.config import RunConfig, Symmetry
from ..core.exceptions import ContinuationError, ConvergenceError
from ..core.model import NLSModel
from ..core.parity import imbalance
from ..spectrum.linear import LinearBasis
from ..stability.bdg import state_stability
from .base import Branch, BranchCallback, BranchEvent, EventType, StationaryState
from .newton import (
    ParitySubspace,
    as_model,
    bordered_newton,
    branch_tangent,
    fixed_mu_newton,
    inner,
    make_state,
    newton_solve,
    seed_state,
)
from .pitchfork import locate_pitchforks, negative_count, seed_daughter

FAST_ITERATIONS = 4
GROWTH = 1.5
MAX_HALVINGS = 6


def two_mode_share(state: StationaryState, basis: LinearBasis) -> float:
    """Fraction of the norm carried by the two localized modes"""
    grid = basis.grid
    cL = grid.inner(basis.phiL.values, state.values)
    cR = grid.inner(basis.phiR.values, state.values)
    return float((abs(cL) ** 2 + abs(cR) ** 2) / state.norm) if state.norm > 0 else 0.0


class BranchTracer:
    """
    Iterator over the stationary states of one solution branch

    States of definite parity are continued inside their parity subspace, asymmetric ones
    in the full space. Pseudo-arclength steps adapt between `ds_min` and `ds_max`; the
    natural method steps mu directly and stops at folds.

    Arg(s)

    :param model: Discretized model
    :param config: Run configuration (continuation, Newton and stability sections are used)
    :param seed: Converged first state of the branch
    :param callback: [Optional] Callback invoked as states converge and events are found
    :param basis: [Optional] Linear basis used to report the two-mode share of each state
    """

    def __init__(
        self,
        model: NLSModel,
        config: RunConfig,
        seed: StationaryState,
        label: Optional[str] = None,
        callback: Optional[BranchCallback] = None,
        basis: Optional[LinearBasis] = None,
        parent: Optional[Symmetry] = None,
        verbose: bool = False,
    ):
        self.model = model
        self.config = config
        self.seed = seed
        self.callback = callback
        self.basis = basis
        self.parent = parent
        self.verbose = verbose

        self.branch = Branch(label=label or seed.symmetry.value, family=seed.symmetry)
        self.space = ParitySubspace(model, seed.parity)
        self.ds = config.continuation.ds0
        self.mu_step = config.continuation.mu_step
        self.steps = 0
        self.done = False
        self.peak_imbalance = 0.0
        self._boundary_warned = False

    @property
    def arclength(self) -> bool:
        return self.config.continuation.method == "arclength"

    def __iter__(self):
        return self

    def __next__(self) -> StationaryState:
        if self.done:
            raise StopIteration

        if not self.branch.states:
            # Invoke on_branch_begin callback
            if self.callback:
                self.callback.on_branch_begin(self.branch)
            state = self.seed
            if state.tangent is None:
                X = self._stack(state)
                state.tangent = branch_tangent(self.space, X)
            self._accept(state)
            return state

        try:
            state = self._step()
        except ContinuationError:
            self._finish()
            raise
        if state is None:
            self._finish()
            raise StopIteration
        return state

    def trace(self) -> Branch:
        for _ in self:
            pass
        return self.branch

    def _log(self, message: str):
        if self.verbose:
            logger.info(message)
        else:
            logger.debug(message)

    def _stack(self, state: StationaryState) -> np.ndarray:
        return np.append(self.space.restrict(state.values), state.mu)

    def _step(self) -> Optional[StationaryState]:
        cfg = self.config.continuation
        if self.steps >= cfg.max_steps:
            logger.warning(f"{self.branch.label}: stopped after {cfg.max_steps} steps")
            return None
        self.steps += 1

        state = self._arclength_step() if self.arclength else self._natural_step()
        if state.mu < cfg.mu_min or state.mu > cfg.mu_max:
            self._log(f"{self.branch.label}: left the mu range at mu={state.mu:.5f}")
            return None
        if state.norm > cfg.n_max:
            self._log(f"{self.branch.label}: reached the norm cap at N={state.norm:.4f}")
            return None
        if state.norm < self.config.newton.trivial_norm:
            self._log(f"{self.branch.label}: collapsed to the trivial state at mu={state.mu:.5f}")
            return None

        previous = self.branch.states[-1]
        if self.arclength and np.sign(state.tangent[-1]) != np.sign(previous.tangent[-1]):
            f = previous.tangent[-1] / (previous.tangent[-1] - state.tangent[-1])
            self._record(
                BranchEvent(
                    type=EventType.fold,
                    mu=previous.mu + f * (state.mu - previous.mu),
                    N=previous.norm + f * (state.norm - previous.norm),
                    index=len(self.branch) - 1,
                    parent=self.parent,
                )
            )

        if self.branch.family == Symmetry.asymmetric and self._merged(previous, state):
            return None

        self._accept(state)
        return state

    def _arclength_step(self) -> StationaryState:
        cfg = self.config.continuation
        previous = self.branch.states[-1]
        X_prev, t_prev = self._stack(previous), previous.tangent

        while True:
            try:
                X, history = bordered_newton(
                    self.space, X_prev + self.ds * t_prev, t_prev, X_prev, self.ds, self.config.newton
                )
                break
            except ConvergenceError as e:
                self.ds *= 0.5
                logger.warning(f"{self.branch.label}: corrector failed near mu={previous.mu:.5f}, ds -> {self.ds:.2e}")
                if self.ds < cfg.ds_min:
                    raise ContinuationError(
                        f"{self.branch.label}: step fell below ds_min={cfg.ds_min} at mu={previous.mu:.5f} ({e.msg})",
                        branch=self.branch,
                    )

        state = make_state(
            self.model,
            self.space.lift(X[:-1]),
            X[-1],
            iterations=len(history) - 1,
            arclength=previous.arclength + self.ds,
            tangent=branch_tangent(self.space, X, t_prev),
        )
        if state.iterations <= FAST_ITERATIONS:
            self.ds = min(GROWTH * self.ds, cfg.ds_max)
        return state

    def _natural_step(self) -> StationaryState:
        states = self.branch.states
        previous = states[-1]
        direction = 1.0 if previous.tangent is None or previous.tangent[-1] >= 0 else -1.0
        if len(states) > 1:
            direction = np.sign(previous.mu - states[-2].mu) or direction

        a_prev = self.space.restrict(previous.values)
        slope = None
        if len(states) > 1 and previous.mu != states[-2].mu:
            slope = (a_prev - self.space.restrict(states[-2].values)) / (previous.mu - states[-2].mu)

        for _ in range(MAX_HALVINGS + 1):
            mu = previous.mu + direction * self.mu_step
            guess = a_prev if slope is None else a_prev + slope * (mu - previous.mu)
            try:
                coords, history = fixed_mu_newton(self.space, guess, mu, self.config.newton)
                break
            except ConvergenceError:
                self.mu_step *= 0.5
                logger.warning(f"{self.branch.label}: Newton failed at mu={mu:.5f}, mu step -> {self.mu_step:.2e}")
        else:
            raise ContinuationError(
                f"{self.branch.label}: natural continuation stalled at mu={previous.mu:.5f} (fold?)", branch=self.branch
            )

        X_prev = self._stack(previous)
        X = np.append(coords, mu)
        h = self.model.grid.spacing
        return make_state(
            self.model,
            self.space.lift(coords),
            mu,
            iterations=len(history) - 1,
            arclength=previous.arclength + np.sqrt(inner(h, X - X_prev, X - X_prev)),
        )

    def _merged(self, previous: StationaryState, state: StationaryState) -> bool:
        """
        Detect the return of an asymmetric branch onto its parity parent
        """
        tol = self.config.continuation.merge_tol
        z_prev = imbalance(self.model.grid, previous.values)
        z = imbalance(self.model.grid, state.values)
        self.peak_imbalance = max(self.peak_imbalance, abs(z_prev), abs(z))
        if self.peak_imbalance <= 10 * tol:
            return False

        crossed = np.sign(z) != np.sign(z_prev) and z_prev != 0.0
        if not crossed and abs(z) >= tol:
            return False

        f = z_prev / (z_prev - z) if crossed else 1.0
        self._record(
            BranchEvent(
                type=EventType.merge,
                mu=previous.mu + f * (state.mu - previous.mu),
                N=previous.norm + f * (state.norm - previous.norm),
                index=len(self.branch) - 1,
                parent=self.parent,
                note=f"imbalance {z_prev:.2e} -> {z:.2e}",
            )
        )
        if not crossed:
            self._accept(state)
        return True

    def _accept(self, state: StationaryState):
        if self.space.parity is not None and self.config.continuation.detect_pitchforks:
            state.n_negative = negative_count(self.model, state.values, state.mu, self.space.parity)
        if self.basis is not None:
            state.two_mode_share = two_mode_share(state, self.basis)
        if self.config.stability.track:
            state_stability(state, self.model, self.config.stability)
        if state.boundary_flagged and not self._boundary_warned:
            logger.warning(
                f"{self.branch.label}: profile at mu={state.mu:.5f} reaches {state.psi.boundary_amplitude():.1e} at the box edge"
            )
            self._boundary_warned = True
        self.branch.states.append(state)
        self._log(
            f"{self.branch.label}: mu={state.mu:.6f} N={state.norm:.6f} residual={state.residual:.1e} "
            f"ds={self.ds:.2e} unstable={state.n_unstable}"
        )

        # Invoke on_state_converged callback
        if self.callback:
            self.callback.on_state_converged(self.branch, state)

    def _record(self, event: BranchEvent):
        self.branch.events.append(event)
        logger.info(f"{self.branch.label}: {event.type.value} at mu={event.mu:.5f}, N={event.N:.4f}")

        # Invoke on_event callback
        if self.callback:
            self.callback.on_event(self.branch, event)

    def _finish(self):
        self.done = True
        logger.info(f"{self.branch.label}: {len(self.branch)} states, {len(self.branch.events)} events")

        # Invoke on_branch_end callback
        if self.callback:
            self.callback.on_branch_end(self.branch)


def continue_branch(
    seed: StationaryState,
    config: RunConfig,
    model: Optional[NLSModel] = None,
    callback: Optional[BranchCallback] = None,
    basis: Optional[LinearBasis] = None,
    label: Optional[str] = None,
    verbose: bool = False,
) -> Branch:
    """
    Trace the branch through `seed` and attach its pitchfork events

    A ContinuationError raised mid-branch carries the states traced so far.
    """
    model = model or as_model(config)
    tracer = BranchTracer(model, config, seed, label=label, callback=callback, basis=basis, verbose=verbose)
    error = None
    try:
        branch = tracer.trace()
    except ContinuationError as e:
        error, branch = e, e.branch

    if config.continuation.detect_pitchforks and seed.parity is not None:
        for event, _ in locate_pitchforks(branch, model, config):
            branch.events.append(event)
            if callback:
                callback.on_event(branch, event)
        branch.events.sort(key=lambda e: e.index)

    if error is not None:
        raise ContinuationError(error.msg, branch=branch)
    return branch


def trace_daughters(
    parent: Branch,
    config: RunConfig,
    model: NLSModel,
    callback: Optional[BranchCallback] = None,
    basis: Optional[LinearBasis] = None,
    verbose: bool = False,
) -> List[Branch]:
    """
    Follow the asymmetric branch born at each pitchfork of a parity branch

    A pitchfork already reached as the merge point of an earlier daughter is not traced again.
    """
    daughters: List[Branch] = []
    merges: List[float] = []
    for k, (event, critical) in enumerate(locate_pitchforks(parent, model, config)):
        if any(abs(event.mu - mu) < 10 * config.continuation.bisection_tol + 1e-3 for mu in merges):
            logger.info(f"Pitchfork at mu={event.mu:.5f} closes an already traced daughter")
            continue
        try:
            seed = seed_daughter(model, critical, config, parent.states[0].parity)
        except ContinuationError as e:
            logger.warning(f"{e}")
            continue

        tracer = BranchTracer(
            model,
            config,
            seed,
            label=f"{parent.label}-asymmetric-{k}",
            callback=callback,
            basis=basis,
            parent=parent.family,
            verbose=verbose,
        )
        try:
            daughter = tracer.trace()
        except ContinuationError as e:
            logger.warning(f"{e}")
            daughter = e.branch
        daughters.append(daughter)
        merges.extend(event.mu for event in daughter.events_of(EventType.merge))
    return daughters


def state_at_mu(
    config: RunConfig,
    basis: LinearBasis,
    mu: float,
    model: Optional[NLSModel] = None,
    family: Optional[Symmetry] = None,
) -> StationaryState:
    """
    Stationary state of a parity branch at a prescribed chemical potential

    The branch is traced from its linear mode until mu is bracketed, then the nearer
    state is polished by Newton at exactly `mu`.
    """
    model = model or as_model(config)
    family = family or config.family
    quiet = config.copy_with(
        family=family,
        continuation=config.continuation.copy(update={"detect_pitchforks": False}),
        stability=config.stability.copy(update={"track": False}),
    )
    seed = seed_state(model, basis, family, config.newton)
    previous = None
    for state in BranchTracer(model, quiet, seed):
        if previous is not None and (previous.mu - mu) * (state.mu - mu) <= 0:
            nearest = state if abs(state.mu - mu) < abs(previous.mu - mu) else previous
            return newton_solve(nearest.psi, mu, model, config.newton, parity=seed.parity)
        previous = state
    raise ContinuationError(f"the {family.value} branch never reaches mu={mu}")


def trace_family(
    config: RunConfig,
    basis: LinearBasis,
    model: Optional[NLSModel] = None,
    callback: Optional[BranchCallback] = None,
    verbose: bool = False,
) -> List[Branch]:
    """
    Seed the configured parity branch from its linear mode, trace it, and follow its daughters
    """
    model = model or as_model(config)
    seed = seed_state(model, basis, config.family, config.newton)
    try:
        parent = continue_branch(seed, config, model, callback, basis, verbose=verbose)
    except ContinuationError as e:
        logger.warning(f"{e}")
        parent = e.branch
    branches = [parent]
    if config.continuation.follow_daughters:
        branches.extend(trace_daughters(parent, config, model, callback, basis, verbose))
    return branches
