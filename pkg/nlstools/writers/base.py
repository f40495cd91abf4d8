from abc import abstractmethod

from ..continuation.base import Branch, BranchCallback, StationaryState


class BranchWriter(BranchCallback):
    """Abstract base class for implementing a branch writer"""

    @abstractmethod
    def on_state_converged(self, branch: Branch, state: StationaryState, *args, **kwargs):
        pass
