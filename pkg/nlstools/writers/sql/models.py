from sqlalchemy import Column, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


# SQLAlchemy db models for persisting traced branches
class RunModel(Base):
    """
    Top level table holding one run and its configuration
    """

    __tablename__ = "runs"
    id = Column(Integer, primary_key=True, autoincrement=False, index=True)
    config_hash = Column(String, nullable=True, index=True)
    config = Column(Text, nullable=True)
    kernel = Column(String, nullable=True)
    sigma = Column(Float, nullable=True)
    s = Column(Integer, nullable=True)
    delta = Column(Integer, nullable=True)
    branches = relationship("BranchModel", backref="run")


class BranchModel(Base):
    """
    Branches of a run
    runs and branches share a one to many relationship
    """

    __tablename__ = "branches"
    id = Column(Integer, primary_key=True, autoincrement=True, index=True)
    label = Column(String, index=True)
    family = Column(String)
    run_id = Column(Integer, ForeignKey("runs.id"), index=True)
    states = relationship("StateModel", backref="branch")
    events = relationship("EventModel", backref="branch")


class StateModel(Base):
    """
    SQLAlchemy model for a converged stationary state (scalars only, no profile)
    """

    __tablename__ = "states"
    id = Column(Integer, primary_key=True, autoincrement=True)
    branch_id = Column(Integer, ForeignKey("branches.id"), index=True)
    index = Column(Integer, index=True)
    mu = Column(Float)
    N = Column(Float)
    symmetry = Column(String)
    residual = Column(Float)
    asymmetry = Column(Float, nullable=True)
    n_unstable = Column(Integer, nullable=True)
    max_re_lambda = Column(Float, nullable=True)
    two_mode_share = Column(Float, nullable=True)


class EventModel(Base):
    """
    Pitchfork, fold and merge events located on a branch
    """

    __tablename__ = "events"
    id = Column(Integer, primary_key=True, autoincrement=True)
    branch_id = Column(Integer, ForeignKey("branches.id"), index=True)
    type = Column(String, index=True)
    mu = Column(Float)
    N = Column(Float)
    index = Column(Integer)
    parent = Column(String, nullable=True)
    note = Column(String, nullable=True)
