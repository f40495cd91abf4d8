from __future__ import annotations

from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, validator

from ..core.config import Symmetry
from ..spectrum.linear import LinearBasis
from ..spectrum.overlaps import OverlapSet, Regime


class StabilityType(str, Enum):
    center = "center"
    saddle = "saddle"


class ModeParams(BaseModel):
    """
    Coefficients of the reduced two-mode system

    `eta` is eta_0 in case1 and eta_0 - eta_1 otherwise; `eta4` is zero in case3.
    `eta0` and `eta1` keep the raw overlaps for the amplitude-level formulas.
    """

    s: int
    delta: int
    eta: float
    eta4: float
    omega: float
    Omega: float
    N: Optional[float] = None
    mu: Optional[float] = None
    eta0: Optional[float] = None
    eta1: float = 0.0
    regime: Regime = Regime.case1

    class Config:
        frozen = True

    @validator("s", "delta")
    def must_be_sign(cls, v: int, values: dict, **kwargs):
        if v not in (-1, 1):
            raise ValueError(f"must be +1 or -1, got {v}")
        return v

    @validator("omega")
    def omega_positive(cls, v: float, values: dict, **kwargs):
        if v <= 0:
            raise ValueError("tunneling splitting omega must be positive")
        return v

    @validator("N")
    def norm_positive(cls, v: Optional[float], values: dict, **kwargs):
        if v is not None and v <= 0:
            raise ValueError("norm N must be positive")
        return v

    @validator("eta0", always=True)
    def default_eta0(cls, v: Optional[float], values: dict, **kwargs):
        if v is None:
            return values.get("eta")
        return v

    @property
    def omega0(self) -> float:
        return self.Omega - self.omega

    @property
    def omega1(self) -> float:
        return self.Omega + self.omega

    @property
    def eta_a(self) -> float:
        """Self plus cross coefficient entering the z = 0 amplitude equations"""
        return self.eta0 if self.regime == Regime.case1 else self.eta0 + self.eta1

    def with_norm(self, N: float) -> ModeParams:
        return self.copy(update={"N": float(N)})

    def with_mu(self, mu: float) -> ModeParams:
        return self.copy(update={"mu": float(mu)})

    def nonlinearity(self, N: Optional[float] = None) -> float:
        """f(N) = s eta N + delta eta4 N^2"""
        N = self.N if N is None else N
        if N is None:
            raise ValueError("the norm N is not set")
        return self.s * self.eta * N + self.delta * self.eta4 * N**2


class TwoModeState(BaseModel):
    z: float
    theta: float

    class Config:
        frozen = True

    @validator("z")
    def imbalance_bounded(cls, v: float, values: dict, **kwargs):
        if abs(v) > 1.0 + 1e-12:
            raise ValueError(f"population imbalance must satisfy |z| <= 1, got {v}")
        return v

    @validator("theta")
    def wrap_phase(cls, v: float, values: dict, **kwargs):
        return float(np.mod(v, 2.0 * np.pi))


class FixedPoint(BaseModel):
    state: TwoModeState
    family: Symmetry
    stability: Optional[StabilityType] = None
    lambda_sq: Optional[float] = None

    @validator("family")
    def state_matches_family(cls, v: Symmetry, values: dict, **kwargs):
        state = values.get("state")
        if state is None:
            return v
        if v == Symmetry.symmetric and not (state.z == 0 and np.isclose(np.cos(state.theta), 1.0)):
            raise ValueError("symmetric fixed points sit at z = 0, theta = 0")
        if v == Symmetry.antisymmetric and not (state.z == 0 and np.isclose(np.cos(state.theta), -1.0)):
            raise ValueError("antisymmetric fixed points sit at z = 0, theta = pi")
        if v == Symmetry.asymmetric and state.z == 0:
            raise ValueError("asymmetric fixed points have z != 0")
        return v


class CriticalNorms(BaseModel):
    """
    Norms at which asymmetric fixed points detach from the z = 0 points

    N0cr <= N1cr solve f(N) = -2 omega (symmetric point), N2cr <= N3cr solve f(N) = +2 omega
    (antisymmetric point); non-real and non-positive roots are None
    """

    N0cr: Optional[float] = None
    N1cr: Optional[float] = None
    N2cr: Optional[float] = None
    N3cr: Optional[float] = None

    def present(self) -> List[float]:
        return [n for n in (self.N0cr, self.N1cr, self.N2cr, self.N3cr) if n is not None]


def mode_params(
    basis: LinearBasis, overlaps: OverlapSet, s: int, delta: int, regime: Optional[Regime] = None, **kwargs
) -> ModeParams:
    """
    Reduced-system coefficients for a given overlap set and truncation regime

    :param regime: Overrides `overlaps.regime`; case1 when neither is known
    """
    regime = regime or overlaps.regime or Regime.case1
    eta0, eta1, eta4 = overlaps[0], overlaps[1], overlaps[4]
    return ModeParams(
        s=s,
        delta=delta,
        eta=eta0 if regime == Regime.case1 else eta0 - eta1,
        eta4=0.0 if regime == Regime.case3 else eta4,
        omega=basis.omega,
        Omega=basis.Omega,
        eta0=eta0,
        eta1=0.0 if regime == Regime.case1 else eta1,
        regime=regime,
        **kwargs,
    )
