from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, validator
from scipy.linalg import solve_banded

from ..continuation.base import StationaryState
from ..core.config import DynamicsConfig
from ..core.exceptions import ConvergenceError, NormDriftError, NumericalBlowupError
from ..core.grid import Grid, GridFunction
from ..core.model import NLSModel
from ..core.parity import imbalance
from ..stability.bdg import build_bdg, unstable_mode

PICARD_TOL = 1e-13
PICARD_MAX_ITER = 60
LINEAR_WINDOW = 0.1


class EvolutionRun(BaseModel):
    """
    Sampled solution of i psi_t = H psi - mu psi + W(psi) psi

    `norm_series` holds the lattice norm h sum |psi|^2, which the midpoint rule conserves exactly.
    """

    grid: Grid
    mu: float
    dt: float
    times: np.ndarray
    snapshots: List[GridFunction]
    norm_series: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @validator("norm_series")
    def one_norm_per_sample(cls, v: np.ndarray, values: dict, **kwargs):
        if "times" in values and v.shape != values["times"].shape:
            raise ValueError("norm_series must have one entry per sample time")
        return v

    @property
    def max_norm_drift(self) -> float:
        return float(np.max(np.abs(self.norm_series - self.norm_series[0])) / self.norm_series[0])

    @property
    def imbalance(self) -> np.ndarray:
        """(N_left - N_right) / N per sample"""
        return np.array([imbalance(self.grid, s.values) for s in self.snapshots])

    def onset_time(self, level: float = 0.5) -> Optional[float]:
        """First sample time with |imbalance| >= level"""
        hits = np.flatnonzero(np.abs(self.imbalance) >= level)
        return float(self.times[hits[0]]) if hits.size else None

    def breaking_amplitude(self, parity: int) -> np.ndarray:
        """
        ||psi - parity psi(-x)|| / (2 ||psi||): the part of each sample that breaks the given parity
        """
        grid = self.grid
        return np.array(
            [np.sqrt(grid.norm(s.values - parity * grid.reflect(s.values)) / grid.norm(s.values)) / 2.0 for s in self.snapshots]
        )

    def density_matrix(self, every: Optional[float] = None) -> pd.DataFrame:
        """
        |psi(x, t)|^2 with one row per kept sample (index t) and one column per grid point
        """
        keep = np.arange(len(self.times))
        if every is not None and len(self.times) > 1:
            stride = max(int(round(every / (self.times[1] - self.times[0]))), 1)
            keep = keep[::stride]
        data = np.array([np.abs(self.snapshots[i].values) ** 2 for i in keep])
        frame = pd.DataFrame(data, index=pd.Index(self.times[keep], name="t"), columns=self.grid.points)
        return frame

    def dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "N": self.norm_series, "imbalance": self.imbalance})


def _midpoint_step(model: NLSModel, psi: np.ndarray, mu: float, dt: float) -> np.ndarray:
    """
    One implicit midpoint step; the nonlinear potential is iterated at the midpoint and each
    iterate is a Cayley transform of a real tridiagonal operator, so the norm is kept exactly
    """
    op = model.operator
    half = 0.5j * dt
    Hpsi = op.apply(psi) - mu * psi
    new = psi
    for iteration in range(PICARD_MAX_ITER):
        W = model.nonlinear_potential(0.5 * (psi + new))
        ab = op.banded(shift=1.0 + half * (W - mu), scale=half)
        rhs = psi - half * (Hpsi + W * psi)
        updated = solve_banded((1, 1), ab, rhs)
        change = np.max(np.abs(updated - new))
        new = updated
        if change <= PICARD_TOL * max(np.max(np.abs(new)), 1e-300):
            return new
    raise ConvergenceError(f"midpoint iteration stalled after {PICARD_MAX_ITER} iterations (change {change:.2e})")


def evolve(
    initial: GridFunction,
    mu: float,
    t_end: float,
    dt: float,
    model: NLSModel,
    sample_every: float = 0.2,
    norm_tol: float = 1e-8,
) -> EvolutionRun:
    """
    Integrate the time-dependent equation from `initial` with the implicit midpoint rule

    :param sample_every: Time between stored samples (rounded to a whole number of steps)
    :param norm_tol: Relative norm drift that aborts the run
    """
    grid = initial.grid
    psi = np.array(initial.values, dtype=complex)
    n_steps = int(round(t_end / dt))
    stride = max(int(round(sample_every / dt)), 1)

    n0 = grid.lattice_norm(psi)
    times, snapshots, norms = [0.0], [GridFunction(grid=grid, values=psi.copy())], [n0]
    logger.info(f"Evolving to t={n_steps * dt:g} with dt={dt:g} ({n_steps} steps), N(0)={n0:.6f}")

    for step in range(1, n_steps + 1):
        psi = _midpoint_step(model, psi, mu, dt)
        if step % stride and step != n_steps:
            continue

        t = step * dt
        if not np.all(np.isfinite(psi)):
            raise NumericalBlowupError(f"non-finite field at t={t:g}", time=t)
        N = grid.lattice_norm(psi)
        drift = abs(N - n0) / n0 if n0 > 0 else abs(N)
        if drift > norm_tol:
            raise NormDriftError(f"relative norm drift {drift:.2e} exceeds {norm_tol:g} at t={t:g}", time=t, drift=drift)

        times.append(t)
        snapshots.append(GridFunction(grid=grid, values=psi.copy()))
        norms.append(N)
        logger.debug(f"t={t:g} N={N:.12f} imbalance={imbalance(grid, psi):+.3e}")

    return EvolutionRun(
        grid=grid, mu=mu, dt=dt, times=np.array(times), snapshots=snapshots, norm_series=np.array(norms)
    )


def perturb(
    state: StationaryState,
    model: NLSModel,
    kind: str = "random",
    amplitude: float = 1e-3,
    seed: int = 0,
) -> Tuple[GridFunction, Optional[float]]:
    """
    Stationary profile plus a perturbation of norm amplitude * ||psi||

    `random` draws complex noise shaped by |psi| from a seeded generator; `eigenvector`
    uses the most unstable BdG mode and also returns its growth rate.
    """
    psi = np.array(state.values, dtype=complex)
    grid = model.grid
    rate = None
    if kind == "none" or amplitude == 0.0:
        return GridFunction(grid=grid, values=psi), rate

    if kind == "eigenvector":
        mode = unstable_mode(build_bdg(state, model))
        if mode is None:
            logger.warning(f"State at mu={state.mu} has no unstable mode, using a random perturbation")
            kind = "random"
        else:
            rate, p = mode
    if kind == "random":
        rng = np.random.default_rng(seed)
        envelope = np.abs(psi) / np.max(np.abs(psi))
        p = (rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)) * envelope
    elif kind != "eigenvector":
        raise ValueError(f"unknown perturbation {kind}")

    p = p * amplitude * np.sqrt(state.norm / grid.norm(p))
    return GridFunction(grid=grid, values=psi + p), rate


def growth_rate(times: np.ndarray, amplitude: np.ndarray, lower: Optional[float] = None, upper: float = LINEAR_WINDOW) -> Optional[float]:
    """
    Exponential rate fitted to the samples of `amplitude` inside [lower, upper]

    The lower edge defaults to twice the initial amplitude so that the transient of a
    random kick is skipped. Returns None with fewer than three samples in the window.
    """
    lower = 2.0 * amplitude[0] if lower is None else lower
    first_exit = np.flatnonzero(amplitude > upper)
    end = first_exit[0] if first_exit.size else len(amplitude)
    window = np.flatnonzero(amplitude[:end] >= lower)
    if window.size < 3:
        return None
    slope, _ = np.polyfit(times[window], np.log(amplitude[window]), 1)
    return float(slope)


def evolve_state(
    state: StationaryState,
    model: NLSModel,
    config: DynamicsConfig,
    seed: int = 0,
) -> Tuple[EvolutionRun, Optional[float]]:
    """
    Perturb a stationary state as configured and evolve it; also returns the BdG rate of an
    eigenvector kick
    """
    initial, rate = perturb(state, model, config.perturbation, config.amplitude, seed)
    run = evolve(initial, state.mu, config.t_end, config.dt, model, config.phase_every, config.norm_tol)
    onset = run.onset_time(config.onset_level)
    if onset is None:
        logger.info(f"No order-unity imbalance up to t={config.t_end:g}")
    else:
        logger.info(f"Imbalance reached {config.onset_level} at t={onset:g}")
    return run, rate
