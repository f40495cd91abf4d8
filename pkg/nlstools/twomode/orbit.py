from __future__ import annotations

from typing import List, Optional

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel
from scipy.integrate import solve_ivp

from ..core.exceptions import ConvergenceError, SingularityError
from .params import ModeParams, TwoModeState
from .system import hamiltonian, reduced_rhs

DRIFT_TOL = 1e-8
SINGULAR_MARGIN = 1e-9


class Orbit(BaseModel):
    """
    Sampled two-mode trajectory; theta is kept unwrapped, `p` is dz/dt
    """

    t: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    max_drift: float

    class Config:
        arbitrary_types_allowed = True

    def dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.t,
                "z": self.z,
                "theta": np.mod(self.theta, 2.0 * np.pi),
                "p": self.p,
                "H": self.energy,
            }
        )


def _energy_scale(h0: float, p: ModeParams) -> float:
    return max(abs(h0), 2.0 * p.omega)


def integrate_orbit(
    initial: TwoModeState,
    p: ModeParams,
    t_end: float,
    dt: float,
    rtol: float = 1e-12,
    max_refinements: int = 6,
) -> Orbit:
    """
    Integrate the reduced system with an 8th order Runge-Kutta scheme (DOP853)

    The Hamiltonian is monitored on the samples; on a drift above 1e-8 (relative to
    max(|H0|, 2 w)) the maximum step is halved and the run repeated.
    """
    if abs(initial.z) >= 1.0:
        raise SingularityError("initial state sits on |z| = 1", z=initial.z, theta=initial.theta)
    if dt <= 0 or t_end <= 0:
        raise ValueError("t_end and dt must be positive")

    f = p.nonlinearity()
    w = p.omega

    def rhs(t, y):
        z, theta = y
        root = np.sqrt(max(1.0 - z * z, 0.0))
        return [2.0 * w * root * np.sin(theta), -2.0 * w * z * np.cos(theta) / root - f * z]

    def near_singularity(t, y):
        return 1.0 - SINGULAR_MARGIN - abs(y[0])

    near_singularity.terminal = True

    t_eval = np.arange(0.0, t_end + 0.5 * dt, dt)
    t_eval = t_eval[t_eval <= t_end]
    h0 = hamiltonian(initial, p)
    scale = _energy_scale(h0, p)

    max_step = min(dt, t_end)
    drifts: List[float] = []
    for _ in range(max_refinements + 1):
        sol = solve_ivp(
            rhs,
            (0.0, t_end),
            [initial.z, initial.theta],
            method="DOP853",
            t_eval=t_eval,
            rtol=rtol,
            atol=1e-14,
            max_step=max_step,
            events=near_singularity,
        )
        if sol.status == 1:
            z_end, theta_end = sol.y_events[0][0]
            raise SingularityError(
                f"trajectory reached |z| = 1 at t = {sol.t_events[0][0]:.4f}", z=float(z_end), theta=float(theta_end)
            )
        if sol.status < 0:
            raise ConvergenceError(f"orbit integration failed: {sol.message}")

        z, theta = sol.y
        energy = 2.0 * w * np.sqrt(np.clip(1.0 - z**2, 0.0, None)) * np.cos(theta) - 0.5 * f * z**2
        drift = float(np.max(np.abs(energy - h0)) / scale)
        drifts.append(drift)
        if drift <= DRIFT_TOL:
            break
        logger.debug(f"Hamiltonian drift {drift:.2e} above {DRIFT_TOL}, halving max_step to {max_step / 2}")
        max_step /= 2.0
    else:
        raise ConvergenceError(f"Hamiltonian drift stays above {DRIFT_TOL}", history=drifts)

    pz = 2.0 * w * np.sqrt(np.clip(1.0 - z**2, 0.0, None)) * np.sin(theta)
    return Orbit(t=sol.t, z=z, theta=theta, p=pz, energy=energy, max_drift=drift)


def second_order_residual(orbit: Orbit, p: ModeParams) -> float:
    """
    Largest mismatch between d(dz/dt)/dt along the orbit and the position-momentum right-hand side
    """
    f = p.nonlinearity()
    w = p.omega
    accel = np.empty_like(orbit.z)
    for i, (z, theta) in enumerate(zip(orbit.z, orbit.theta)):
        zdot, thetadot = reduced_rhs(TwoModeState(z=z, theta=theta), p)
        root = np.sqrt(1.0 - z**2)
        accel[i] = 2.0 * w * (-z * zdot / root * np.sin(theta) + root * np.cos(theta) * thetadot)

    branch = np.sign(np.cos(orbit.theta))
    radicand = np.clip(4.0 * w**2 * (1.0 - orbit.z**2) - orbit.p**2, 0.0, None)
    pdot = -4.0 * w**2 * orbit.z - f * orbit.z * branch * np.sqrt(radicand)
    return float(np.max(np.abs(accel - pdot)))


def phase_portrait(
    p: ModeParams,
    initial: List[TwoModeState],
    t_end: float,
    dt: float,
) -> pd.DataFrame:
    """
    Bundle of orbits, one block of rows per initial condition (column `orbit`)
    """
    frames = []
    for idx, state in enumerate(initial):
        try:
            frame = integrate_orbit(state, p, t_end, dt).dataframe()
        except SingularityError as e:
            logger.warning(f"Orbit {idx} from ({state.z}, {state.theta}) skipped: {e}")
            continue
        frame.insert(0, "orbit", idx)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def portrait_initial_states(n_orbits: int, z_max: float = 0.95, theta: Optional[float] = None) -> List[TwoModeState]:
    """
    Seeds spread along z in the theta = 0 and theta = pi sections
    """
    zs = np.linspace(-z_max, z_max, max(n_orbits // 2, 1))
    thetas = [0.0, np.pi] if theta is None else [theta]
    return [TwoModeState(z=float(z), theta=th) for th in thetas for z in zs]


def hamiltonian_mesh(p: ModeParams, n_z: int = 201, n_theta: int = 201) -> pd.DataFrame:
    """
    Level values of H on a (z, theta) mesh covering [-1, 1] x [0, 2 pi]
    """
    z = np.linspace(-1.0, 1.0, n_z)
    theta = np.linspace(0.0, 2.0 * np.pi, n_theta)
    Z, T = np.meshgrid(z, theta, indexing="ij")
    H = 2.0 * p.omega * np.sqrt(1.0 - Z**2) * np.cos(T) - 0.5 * p.nonlinearity() * Z**2
    return pd.DataFrame({"z": Z.ravel(), "theta": T.ravel(), "H": H.ravel()})
