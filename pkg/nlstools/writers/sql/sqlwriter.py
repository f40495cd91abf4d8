from typing import Dict, List, Optional

from loguru import logger
from sqlalchemy import create_engine
from sqlalchemy.orm import Session

from nlstools.continuation.base import Branch, BranchEvent, StationaryState
from nlstools.core.config import RunConfig, config_hash, config_json

from ..base import BranchWriter
from .models import Base, BranchModel, EventModel, RunModel, StateModel


class SQLWriter(BranchWriter):
    """
    Special callback to insert traced branches into a sqlite database

    States are buffered per branch and bulk inserted when the branch ends; events are
    inserted as they arrive, including those reported after the branch ended.
    """

    def __init__(self, run_id: int, db_name: str = "branches.db", config: Optional[RunConfig] = None, debug: bool = False):
        self.__db_name = db_name
        if debug:
            self.__engine = create_engine(f"sqlite:///{self.__db_name}", echo=True)
        else:
            self.__engine = create_engine(f"sqlite:///{self.__db_name}", echo=False)

        self.__session = Session(bind=self.__engine)
        Base.metadata.create_all(bind=self.__engine)
        self.__run_id = run_id
        self.__debug = debug
        self.__branches: Dict[str, BranchModel] = {}
        self.__pending: Dict[str, List[StateModel]] = {}

        # Persist the run
        self.__run = RunModel(id=self.__run_id)
        if config is not None:
            self.__run.config_hash = config_hash(config)
            self.__run.config = config_json(config)
            self.__run.kernel = config.kernel.family.value
            self.__run.sigma = config.kernel.sigma
            self.__run.s = config.s
            self.__run.delta = config.delta
        self._commit(self.__run)

    @property
    def db_name(self) -> str:
        return self.__db_name

    def _commit(self, *models):
        try:
            self.__session.add_all(models)
            self.__session.commit()
        except Exception as e:
            self.__session.rollback()
            if self.__debug:
                logger.debug(e)

    def _branch_model(self, branch: Branch) -> BranchModel:
        if branch.label not in self.__branches:
            model = BranchModel(label=branch.label, family=branch.family.value, run=self.__run)
            self._commit(model)
            self.__branches[branch.label] = model
            self.__pending[branch.label] = []
        return self.__branches[branch.label]

    def on_branch_begin(self, branch: Branch, *args, **kwargs):
        self._branch_model(branch)

    def on_state_converged(self, branch: Branch, state: StationaryState, *args, **kwargs):
        model = self._branch_model(branch)
        pending = self.__pending[branch.label]
        pending.append(
            StateModel(
                branch_id=model.id,
                index=len(pending),
                mu=state.mu,
                N=state.norm,
                symmetry=state.symmetry.value,
                residual=state.residual,
                asymmetry=state.asymmetry,
                n_unstable=state.n_unstable,
                max_re_lambda=state.max_re_lambda,
                two_mode_share=state.two_mode_share,
            )
        )

    def on_event(self, branch: Branch, event: BranchEvent, *args, **kwargs):
        model = self._branch_model(branch)
        self._commit(EventModel(branch_id=model.id, **event.as_dict()))

    def on_branch_end(self, branch: Branch, *args, **kwargs):
        states = self.__pending.get(branch.label, [])
        try:
            self.__session.bulk_save_objects(states, return_defaults=True)
            self.__session.commit()
            self.__pending[branch.label] = []
        except Exception:
            self.__session.rollback()

        if self.__debug:
            logger.debug(f"Branch {branch.label} ({len(states)} states) inserted into {self.__db_name}")
