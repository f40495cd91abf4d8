import json
import os

import numpy as np
import pandas as pd
import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker

from nlstools.continuation.base import BranchEvent, EventType
from nlstools.continuation.branch import BranchTracer, continue_branch
from nlstools.continuation.newton import seed_state
from nlstools.core.config import Symmetry, config_hash
from nlstools.core.grid import GridFunction, build_grid
from nlstools.writers.csvwriter import (
    BRANCH_COLUMNS,
    CSVBranchWriter,
    read_grid_function_csv,
    read_grid_function_json,
    read_state_json,
    to_jsonable,
    write_grid_function_csv,
    write_grid_function_json,
    write_manifest,
)
from nlstools.writers.sql import Base, BranchModel, EventModel, RunModel, SQLWriter, StateModel


@pytest.fixture
def sql_session():
    engine = create_engine("sqlite://", echo=True)
    Base.metadata.create_all(bind=engine)
    Session = sessionmaker(bind=engine)
    session = Session()
    yield session
    session.close()
    Base.metadata.drop_all(engine)
    engine.dispose()


@pytest.fixture(scope="module")
def short_config(small_config):
    return small_config.copy_with(
        continuation=small_config.continuation.copy(update={"max_steps": 4, "detect_pitchforks": False}),
        stability=small_config.stability.copy(update={"track": False}),
    )


@pytest.fixture(scope="module")
def seed(short_config, small_model, small_basis):
    return seed_state(small_model, small_basis, Symmetry.antisymmetric, short_config.newton)


def test_models_relationships(sql_session, faker):
    run_id = faker.random_int(1, 1000)
    run = RunModel(id=run_id, kernel="gaussian", sigma=1.0, s=1, delta=-1)
    branch = BranchModel(label="antisymmetric", family="antisymmetric", run=run)
    sql_session.add_all([run, branch])
    sql_session.commit()

    states = [StateModel(branch_id=branch.id, index=i, mu=0.15 + 0.01 * i, N=0.1 * i, symmetry="antisymmetric", residual=1e-13) for i in range(5)]
    sql_session.add_all(states)
    sql_session.add(EventModel(branch_id=branch.id, type="pitchfork", mu=0.17, N=0.2, index=2))
    sql_session.commit()

    stored = sql_session.query(RunModel).filter(RunModel.id == run_id).one()
    assert [b.label for b in stored.branches] == ["antisymmetric"]
    assert len(stored.branches[0].states) == 5
    assert stored.branches[0].events[0].type == "pitchfork"
    assert sql_session.query(StateModel).filter(StateModel.mu > 0.175).count() == 2


def test_sqlwriter_stores_a_traced_branch(tmp_path, short_config, small_model, seed):
    db_name = str(tmp_path / "branches.db")
    writer = SQLWriter(7, db_name=db_name, config=short_config)
    branch = continue_branch(seed, short_config, small_model, writer)
    writer.on_event(branch, BranchEvent(type=EventType.fold, mu=0.2, N=0.5, index=len(branch) - 1))
    assert writer.db_name == db_name

    engine = create_engine(f"sqlite:///{db_name}")
    with Session(bind=engine) as session:
        run = session.query(RunModel).one()
        assert run.id == 7
        assert run.config_hash == config_hash(short_config)
        assert run.kernel == "gaussian"
        assert json.loads(run.config)["continuation"]["max_steps"] == 4

        stored = session.query(BranchModel).one()
        assert stored.label == branch.label
        assert stored.family == "antisymmetric"

        states = session.query(StateModel).order_by(StateModel.index).all()
        assert [s.index for s in states] == list(range(len(branch)))
        assert np.allclose([s.mu for s in states], branch.mu)
        assert all(s.symmetry == "antisymmetric" for s in states)

        events = session.query(EventModel).all()
        assert [e.type for e in events] == ["fold"]
    engine.dispose()


def test_csv_writer(tmp_path, short_config, small_model, small_basis, seed):
    out_dir = str(tmp_path / "run")
    writer = CSVBranchWriter(out_dir, profiles=True)
    branch = BranchTracer(small_model, short_config, seed, callback=writer, basis=small_basis).trace()

    frame = pd.read_csv(writer.branch_path)
    assert list(frame.columns) == BRANCH_COLUMNS + ["asymmetry", "boundary_flagged"]
    assert len(frame) == len(branch)
    assert list(frame["index"]) == list(range(len(branch)))
    assert np.allclose(frame["mu"], branch.mu)

    with open(writer.events_path) as f:
        assert json.load(f) == []

    profiles = sorted(os.listdir(os.path.join(out_dir, "profiles")))
    assert profiles == [f"{branch.label}_{i:05d}.json" for i in range(len(branch))]
    restored = read_state_json(os.path.join(out_dir, "profiles", profiles[-1]))
    assert restored.mu == branch.states[-1].mu
    assert restored.symmetry == Symmetry.antisymmetric
    assert np.array_equal(restored.values, branch.states[-1].values)
    assert writer.branch_path in writer.artifacts


def test_grid_function_codecs(tmp_path, faker):
    grid = build_grid(3.0, 0.25)
    rng = np.random.default_rng(faker.random_int(0, 10_000))
    f = GridFunction(grid=grid, values=rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points))

    from_csv = read_grid_function_csv(write_grid_function_csv(f, str(tmp_path / "f.csv")))
    assert from_csv.grid.n_points == grid.n_points
    assert from_csv.grid.spacing == pytest.approx(grid.spacing)
    assert np.allclose(from_csv.values, f.values, rtol=1e-14, atol=0)

    from_json = read_grid_function_json(write_grid_function_json(f, str(tmp_path / "f.json")))
    assert from_json.grid == grid
    assert np.array_equal(from_json.values, f.values)

    real = f.with_values(np.real(f.values))
    assert not read_grid_function_json(write_grid_function_json(real, str(tmp_path / "r.json"))).is_complex


def test_manifest(tmp_path, small_config):
    out_dir = str(tmp_path)
    artifacts = [os.path.join(out_dir, "spectrum.json"), os.path.join(out_dir, "modes.csv")]
    path = write_manifest(out_dir, artifacts, small_config, "spectrum", extra={"status": "ok"})
    assert path == os.path.join(out_dir, "manifest.json")

    with open(path) as f:
        manifest = json.load(f)
    assert manifest["artifacts"] == ["modes.csv", "spectrum.json"]
    assert manifest["config_hash"] == config_hash(small_config)
    assert manifest["command"] == "spectrum"
    assert manifest["status"] == "ok"


def test_to_jsonable():
    data = {
        Symmetry.symmetric: np.float64(np.nan),
        "pair": (1, np.int64(2)),
        "values": np.array([1.0, np.inf]),
        "family": Symmetry.asymmetric,
        3: None,
    }
    assert to_jsonable(data) == {
        "symmetric": None,
        "pair": [1, 2],
        "values": [1.0, None],
        "family": "asymmetric",
        "3": None,
    }
