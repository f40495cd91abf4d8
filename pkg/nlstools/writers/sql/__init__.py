from .models import Base, BranchModel, EventModel, RunModel, StateModel
from .sqlwriter import SQLWriter

__all__ = [
    "SQLWriter",
    "RunModel",
    "BranchModel",
    "StateModel",
    "EventModel",
    "Base",
]
