from __future__ import annotations

from abc import ABC
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, validator

from ..core.config import Symmetry
from ..core.grid import GridFunction
from ..core.parity import asymmetry

PARITY_TOL = 1e-6
BOUNDARY_TOL = 1e-8


class EventType(str, Enum):
    pitchfork = "pitchfork"
    fold = "fold"
    merge = "merge"


class StationaryState(BaseModel):
    """
    Converged real stationary profile psi at chemical potential mu
    """

    psi: GridFunction
    mu: float
    norm: float
    symmetry: Symmetry
    residual: float
    iterations: int = 0
    asymmetry: float = 0.0
    n_unstable: Optional[int] = None
    max_re_lambda: Optional[float] = None
    two_mode_share: Optional[float] = None
    n_negative: Optional[int] = None
    arclength: float = 0.0
    tangent: Optional[np.ndarray] = None

    class Config:
        arbitrary_types_allowed = True

    @validator("norm")
    def norm_non_negative(cls, v: float, values: dict, **kwargs):
        if v < 0:
            raise ValueError("norm must be non-negative")
        return v

    @property
    def values(self) -> np.ndarray:
        return self.psi.values

    @property
    def parity(self) -> Optional[int]:
        """+1 for symmetric, -1 for antisymmetric, None otherwise"""
        if self.symmetry == Symmetry.symmetric:
            return 1
        if self.symmetry == Symmetry.antisymmetric:
            return -1
        return None

    @property
    def boundary_flagged(self) -> bool:
        """True when the profile has not decayed below BOUNDARY_TOL of its peak at the box edges"""
        peak = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        return self.psi.boundary_amplitude() > BOUNDARY_TOL * max(peak, 1e-300)

    def reflected(self) -> StationaryState:
        return self.copy(update={"psi": self.psi.reflected(), "tangent": None})

    def as_row(self) -> dict:
        return {
            "mu": self.mu,
            "N": self.norm,
            "symmetry": self.symmetry.value,
            "n_unstable": self.n_unstable,
            "max_re_lambda": self.max_re_lambda,
            "residual": self.residual,
            "two_mode_share": self.two_mode_share,
            "asymmetry": self.asymmetry,
            "boundary_flagged": self.boundary_flagged,
        }


def classify_symmetry(psi: GridFunction, tol: float = PARITY_TOL) -> Tuple[Symmetry, float]:
    """
    Label a profile by the reflection test; returns the label and the asymmetry measure
    ||psi(x) - psi(-x)|| / ||psi|| (or with + for the antisymmetric test)
    """
    even_defect = asymmetry(psi.grid, psi.values, 1)
    odd_defect = asymmetry(psi.grid, psi.values, -1)
    if even_defect <= tol:
        return Symmetry.symmetric, even_defect
    if odd_defect <= tol:
        return Symmetry.antisymmetric, odd_defect
    return Symmetry.asymmetric, min(even_defect, odd_defect)


class BranchEvent(BaseModel):
    type: EventType
    mu: float
    N: float
    index: int
    parent: Optional[Symmetry] = None
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "type": self.type.value,
            "mu": self.mu,
            "N": self.N,
            "index": self.index,
            "parent": self.parent.value if self.parent else None,
            "note": self.note,
        }


class Branch(BaseModel):
    """
    Ordered stationary states along one solution curve, with the events detected on it
    """

    label: str
    family: Symmetry
    states: List[StationaryState] = []
    events: List[BranchEvent] = []

    class Config:
        arbitrary_types_allowed = True

    def __len__(self):
        return len(self.states)

    @property
    def mu(self) -> np.ndarray:
        return np.array([state.mu for state in self.states])

    @property
    def norms(self) -> np.ndarray:
        return np.array([state.norm for state in self.states])

    def events_of(self, kind: EventType) -> List[BranchEvent]:
        return [event for event in self.events if event.type == kind]

    @property
    def dataframe(self) -> pd.DataFrame:
        return pd.DataFrame.from_dict([state.as_row() for state in self.states])


class BranchCallback(ABC):
    """
    Base class used to build callbacks invoked while a branch is traced

    Custom callbacks subclass `BranchCallback` and override the hooks of interest
    """

    def __init__(self):
        pass

    def on_branch_begin(self, branch: Branch, *args, **kwargs):
        """
        Called before the first state of a branch is stored

        :param branch: Branch about to be traced
        """
        pass

    def on_state_converged(self, branch: Branch, state: StationaryState, *args, **kwargs):
        """
        Called each time a state is appended to the branch

        :param state: Newly converged state
        """
        pass

    def on_event(self, branch: Branch, event: BranchEvent, *args, **kwargs):
        """
        Called when a pitchfork, fold or merge is located

        :param event: The detected event
        """
        pass

    def on_branch_end(self, branch: Branch, *args, **kwargs):
        """
        Called when tracing stops, whether the branch ended normally or was aborted
        """
        pass


class CallbackList(BranchCallback):
    def __init__(self, callbacks: Optional[List[BranchCallback]] = None):
        self.callbacks = [c for c in (callbacks or []) if c is not None]

    def on_branch_begin(self, branch: Branch, *args, **kwargs):
        for callback in self.callbacks:
            callback.on_branch_begin(branch, *args, **kwargs)

    def on_state_converged(self, branch: Branch, state: StationaryState, *args, **kwargs):
        for callback in self.callbacks:
            callback.on_state_converged(branch, state, *args, **kwargs)

    def on_event(self, branch: Branch, event: BranchEvent, *args, **kwargs):
        for callback in self.callbacks:
            callback.on_event(branch, event, *args, **kwargs)

    def on_branch_end(self, branch: Branch, *args, **kwargs):
        for callback in self.callbacks:
            callback.on_branch_end(branch, *args, **kwargs)
