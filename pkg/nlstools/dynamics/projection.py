from __future__ import annotations

from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from ..core.exceptions import GridError
from ..spectrum.linear import LinearBasis
from ..twomode.params import ModeParams, TwoModeState
from ..twomode.system import hamiltonian
from .evolve import EvolutionRun

PHASE_FLOOR = 1e-12


def project_phase_plane(run: EvolutionRun, basis: LinearBasis, params: Optional[ModeParams] = None) -> pd.DataFrame:
    """
    Project every sample of a run on the localized modes phiL, phiR

    Columns: t, cL, cR (complex), N, N_proj, z, theta, residual_share, flagged and, when
    `params` is given, the two-mode energy of (z, theta) at the projected norm. theta is
    NaN on flagged samples where either projection is below 1e-12.
    """
    if run.grid != basis.grid:
        raise GridError(f"run lives on {run.grid}, the basis on {basis.grid}")

    grid = basis.grid
    phiL, phiR = basis.phiL.values, basis.phiR.values
    rows = []
    for t, N, snapshot in zip(run.times, run.norm_series, run.snapshots):
        cL = complex(grid.inner(phiL, snapshot.values))
        cR = complex(grid.inner(phiR, snapshot.values))
        n_proj = abs(cL) ** 2 + abs(cR) ** 2
        flagged = min(abs(cL), abs(cR)) < PHASE_FLOOR
        z = (abs(cL) ** 2 - abs(cR) ** 2) / n_proj if n_proj > 0 else 0.0
        theta = np.nan if flagged else float(np.mod(np.angle(cL) - np.angle(cR), 2.0 * np.pi))
        row = {
            "t": float(t),
            "cL": cL,
            "cR": cR,
            "N": float(N),
            "N_proj": n_proj,
            "z": z,
            "theta": theta,
            "residual_share": 1.0 - n_proj / N,
            "flagged": flagged,
        }
        if params is not None:
            row["energy"] = np.nan if flagged else hamiltonian(TwoModeState(z=z, theta=theta), params.with_norm(n_proj))
        rows.append(row)

    frame = pd.DataFrame.from_dict(rows)
    if frame["flagged"].any():
        logger.warning(f"{int(frame['flagged'].sum())} samples have an undefined relative phase")
    return frame
