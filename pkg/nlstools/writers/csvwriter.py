from __future__ import annotations

import json
import os
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from ..continuation.base import Branch, BranchEvent, StationaryState
from ..core.config import RunConfig, Symmetry, config_hash
from ..core.grid import Grid, GridFunction
from .base import BranchWriter

BRANCH_COLUMNS = ["branch", "index", "mu", "N", "symmetry", "n_unstable", "max_re_lambda", "residual", "two_mode_share"]


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays, enums and tuples into plain JSON types"""
    if isinstance(value, dict):
        return {(k.value if isinstance(k, Enum) else str(k)): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(data: Any, path: str) -> str:
    with open(path, "w") as f:
        json.dump(to_jsonable(data), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_grid_function_csv(f: GridFunction, path: str) -> str:
    values = np.asarray(f.values)
    pd.DataFrame({"x": f.x, "re": np.real(values), "im": np.imag(values)}).to_csv(path, index=False)
    return path


def _grid_from_points(x: np.ndarray) -> Grid:
    n = len(x)
    spacing = float(x[1] - x[0])
    half = spacing * (n - 1) / 2
    return Grid(n_points=n, spacing=spacing, x_min=-half, x_max=half)


def read_grid_function_csv(path: str) -> GridFunction:
    frame = pd.read_csv(path)
    values = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
    if not np.any(frame["im"].to_numpy()):
        values = frame["re"].to_numpy()
    return GridFunction(grid=_grid_from_points(frame["x"].to_numpy()), values=values)


def grid_function_envelope(f: GridFunction) -> Dict:
    values = np.asarray(f.values)
    return {
        "n_points": f.grid.n_points,
        "spacing": f.grid.spacing,
        "x_min": f.grid.x_min,
        "re": np.real(values),
        "im": np.imag(values),
    }


def _from_envelope(data: Dict) -> GridFunction:
    x_min, spacing, n = data["x_min"], data["spacing"], data["n_points"]
    grid = Grid(n_points=n, spacing=spacing, x_min=x_min, x_max=-x_min)
    re, im = np.asarray(data["re"], dtype=float), np.asarray(data["im"], dtype=float)
    return GridFunction(grid=grid, values=re + 1j * im if np.any(im) else re)


def write_grid_function_json(f: GridFunction, path: str) -> str:
    return write_json(grid_function_envelope(f), path)


def read_grid_function_json(path: str) -> GridFunction:
    with open(path) as f:
        return _from_envelope(json.load(f))


def write_state_json(state: StationaryState, path: str) -> str:
    data = grid_function_envelope(state.psi)
    data.update(
        {
            "mu": state.mu,
            "norm": state.norm,
            "symmetry": state.symmetry,
            "residual": state.residual,
            "n_unstable": state.n_unstable,
            "max_re_lambda": state.max_re_lambda,
        }
    )
    return write_json(data, path)


def read_state_json(path: str) -> StationaryState:
    with open(path) as f:
        data = json.load(f)
    return StationaryState(
        psi=_from_envelope(data),
        mu=data["mu"],
        norm=data["norm"],
        symmetry=Symmetry(data["symmetry"]),
        residual=data["residual"],
        n_unstable=data.get("n_unstable"),
        max_re_lambda=data.get("max_re_lambda"),
    )


def branch_rows(branch: Branch) -> List[Dict]:
    return [{"branch": branch.label, "index": i, **state.as_row()} for i, state in enumerate(branch.states)]


def write_manifest(out_dir: str, artifacts: List[str], config: RunConfig, command: str, extra: Optional[Dict] = None) -> str:
    """
    manifest.json naming every artifact (relative to `out_dir`) and the config hash
    """
    data = {
        "command": command,
        "config_hash": config_hash(config),
        "artifacts": sorted(os.path.relpath(a, out_dir) for a in artifacts),
    }
    if extra:
        data.update(extra)
    return write_json(data, os.path.join(out_dir, "manifest.json"))


class CSVBranchWriter(BranchWriter):
    """
    Callback writing branch.csv and events.json into a run directory

    Rows of every branch traced through this writer go into the same CSV with a `branch`
    column; files are rewritten at each branch end and event so a run aborted mid-branch
    still leaves its partial data.

    :param out_dir: Run directory
    :param profiles: Also write one state JSON per converged state under profiles/
    """

    def __init__(self, out_dir: str, profiles: bool = False):
        self.out_dir = out_dir
        self.profiles = profiles
        os.makedirs(out_dir, exist_ok=True)
        if profiles:
            os.makedirs(os.path.join(out_dir, "profiles"), exist_ok=True)

        self.rows: List[Dict] = []
        self.events: List[Dict] = []
        self.artifacts: List[str] = []
        self._counts: Dict[str, int] = {}

    @property
    def branch_path(self) -> str:
        return os.path.join(self.out_dir, "branch.csv")

    @property
    def events_path(self) -> str:
        return os.path.join(self.out_dir, "events.json")

    def on_branch_begin(self, branch: Branch, *args, **kwargs):
        self._counts[branch.label] = 0

    def on_state_converged(self, branch: Branch, state: StationaryState, *args, **kwargs):
        index = self._counts.get(branch.label, 0)
        self._counts[branch.label] = index + 1
        self.rows.append({"branch": branch.label, "index": index, **state.as_row()})
        if self.profiles:
            path = os.path.join(self.out_dir, "profiles", f"{branch.label}_{index:05d}.json")
            self._add(write_state_json(state, path))

    def on_event(self, branch: Branch, event: BranchEvent, *args, **kwargs):
        self.events.append({"branch": branch.label, **event.as_dict()})
        self._write_events()

    def on_branch_end(self, branch: Branch, *args, **kwargs):
        frame = pd.DataFrame.from_dict(self.rows)
        columns = [c for c in BRANCH_COLUMNS if c in frame.columns] + [c for c in frame.columns if c not in BRANCH_COLUMNS]
        frame[columns].to_csv(self.branch_path, index=False)
        self._add(self.branch_path)
        self._write_events()
        logger.info(f"Wrote {len(self.rows)} states to {self.branch_path}")

    def _write_events(self):
        self._add(write_json(self.events, self.events_path))

    def _add(self, path: str):
        if path not in self.artifacts:
            self.artifacts.append(path)


def branch_frame(branches: List[Branch]) -> Tuple[pd.DataFrame, List[Dict]]:
    rows, events = [], []
    for branch in branches:
        rows.extend(branch_rows(branch))
        events.extend({"branch": branch.label, **event.as_dict()} for event in branch.events)
    return pd.DataFrame.from_dict(rows), events
