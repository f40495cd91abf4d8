from __future__ import annotations

import glob
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

from ..continuation.base import Branch, CallbackList, StationaryState
from ..continuation.branch import continue_branch, state_at_mu, trace_family
from ..continuation.newton import as_model, seed_state
from ..core.config import Symmetry, config_hash
from ..core.exceptions import ConfigError, RegimeError
from ..core.model import NLSModel
from ..core.task import Pipeline, RunContext, Task
from ..dynamics.evolve import evolve_state, growth_rate
from ..dynamics.projection import project_phase_plane
from ..dynamics.thermal import screened_poisson_check
from ..spectrum.linear import LinearBasis, linear_basis
from ..spectrum.overlaps import RegimeThresholds, compute_overlaps, regime_thresholds, sweep_overlaps
from ..stability.bdg import BdGSpectrum, branch_spectra, state_stability, sweep_frame, two_mode_lambda_check
from ..twomode.curves import branch_curves, coalescence_sigma, critical_norm_curve, existence_intervals
from ..twomode.orbit import hamiltonian_mesh, phase_portrait, portrait_initial_states
from ..twomode.params import ModeParams, mode_params
from ..twomode.system import asymmetric_mu, asymmetric_norm_polynomial, asymmetric_z, bifurcation_mu, critical_norms, fixed_points
from ..writers.csvwriter import CSVBranchWriter, branch_frame, read_state_json, write_json
from ..writers.sql import SQLWriter


def _basis(context: RunContext) -> LinearBasis:
    if "basis" not in context.results:
        config = context.config
        context.results["basis"] = linear_basis(config.build_grid(), config.potential)
    return context.results["basis"]


def _model(context: RunContext) -> NLSModel:
    if "model" not in context.results:
        context.results["model"] = as_model(context.config)
    return context.results["model"]


def _thresholds(context: RunContext) -> Optional[RegimeThresholds]:
    """Regime thresholds of the configured kernel family, None for the local kernel"""
    if "thresholds" not in context.results:
        config = context.config
        thresholds = None
        if not config.kernel.is_local:
            cfg = config.overlaps
            try:
                thresholds = regime_thresholds(
                    _basis(context), config.kernel.family, cfg.sigma_min, cfg.sigma_max, level=cfg.level
                )
            except RegimeError as e:
                logger.warning(f"No regime thresholds, falling back to the leading-order truncation: {e}")
        context.results["thresholds"] = thresholds
    return context.results["thresholds"]


def _mode_params(context: RunContext) -> ModeParams:
    if "mode_params" not in context.results:
        config = context.config
        k1, k2 = config.kernels
        overlaps = compute_overlaps(_basis(context), k1, k2, _thresholds(context))
        context.results["overlap_set"] = overlaps
        context.results["mode_params"] = mode_params(_basis(context), overlaps, config.s, config.delta)
    return context.results["mode_params"]


def _write_csv(context: RunContext, frame: pd.DataFrame, name: str, index: bool = False):
    if context.out_dir is None:
        return
    path = os.path.join(context.out_dir, name)
    frame.to_csv(path, index=index)
    context.add_artifact(path)


def _write_json(context: RunContext, data, name: str):
    if context.out_dir is None:
        return
    context.add_artifact(write_json(data, os.path.join(context.out_dir, name)))


def _split_complex(frame: pd.DataFrame) -> pd.DataFrame:
    """Replace complex columns by <name>_re / <name>_im pairs"""
    out = pd.DataFrame(index=frame.index)
    for column in frame.columns:
        values = frame[column].to_numpy()
        if np.iscomplexobj(values):
            out[f"{column}_re"] = np.real(values)
            out[f"{column}_im"] = np.imag(values)
        else:
            out[column] = values
    return out


class SpectrumTask(Task):
    """Linear eigenpairs and the localized basis"""

    def run(self, context: RunContext, *args, **kwargs) -> RunContext:
        basis = _basis(context)
        grid = basis.grid
        spectrum = {
            "omega0": basis.omega0,
            "omega1": basis.omega1,
            "Omega": basis.Omega,
            "omega": basis.omega,
            "n_points": grid.n_points,
            "spacing": grid.spacing,
            "potential": context.config.potential.dict(),
        }
        context.results["spectrum"] = spectrum
        logger.info(f"omega0={basis.omega0:.6f}, omega1={basis.omega1:.6f}")

        _write_json(context, spectrum, "spectrum.json")
        modes = pd.DataFrame(
            {
                "x": grid.points,
                "u0": basis.u0.values,
                "u1": basis.u1.values,
                "phiL": basis.phiL.values,
                "phiR": basis.phiR.values,
            }
        )
        _write_csv(context, modes, "modes.csv")
        return context


class OverlapsTask(Task):
    """Overlap sweep over the kernel range and the recomputed regime thresholds"""

    def run(self, context: RunContext, *args, **kwargs) -> RunContext:
        config = context.config
        if config.kernel.is_local:
            raise ConfigError("overlap sweeps need a nonlocal kernel family", errors=[{"field": "kernel.family", "message": "delta"}])

        thresholds = _thresholds(context)
        frame = sweep_overlaps(_basis(context), config.kernel.family, config.overlaps.sigmas, thresholds)
        context.results["overlaps"] = frame
        _write_csv(context, frame, "overlaps.csv")
        if thresholds is not None:
            _write_json(context, thresholds.dict(), "thresholds.json")
        return context


class TwoModeTask(Task):
    """
    Two-mode reduction at the configured kernel: fixed points, critical norms and their
    parent-branch mu, branch curves over N, critical norms over sigma and a phase portrait
    """

    def run(self, context: RunContext, *args, **kwargs) -> RunContext:
        config = context.config
        cfg = config.twomode
        basis = _basis(context)
        p = _mode_params(context)

        rows = []
        for N in cfg.norms:
            for fp in fixed_points(p.with_norm(N)):
                rows.append(
                    {
                        "N": N,
                        "family": fp.family.value,
                        "z": fp.state.z,
                        "theta": fp.state.theta,
                        "lambda_sq": fp.lambda_sq,
                        "type": fp.stability.value,
                    }
                )
        _write_csv(context, pd.DataFrame.from_dict(rows), "fixed_points.csv")
        sweep = np.linspace(cfg.n_min, cfg.n_max, cfg.n_samples)
        _write_csv(context, branch_curves(p, sweep), "branch_curves.csv")

        summary: Dict = {
            "regime": p.regime.value,
            "eta": p.eta,
            "eta4": p.eta4,
            "omega": p.omega,
            "Omega": p.Omega,
            "overlaps": context.results["overlap_set"].as_row(),
            "critical_norms": critical_norms(p).dict(),
            "bifurcation_mu": {name: {"N": N, "mu": mu} for name, (N, mu) in bifurcation_mu(p).items()},
            "asymmetric_existence": [list(interval) for interval in existence_intervals(p, sweep)],
            "coalescence_sigma": None,
        }

        if not config.kernel.is_local:
            ocfg = config.overlaps
            thresholds = _thresholds(context)
            curve = critical_norm_curve(basis, config.kernel.family, ocfg.sigmas, config.s, config.delta, thresholds)
            _write_csv(context, curve, "critical_norms.csv")
            try:
                summary["coalescence_sigma"] = coalescence_sigma(
                    basis, config.kernel.family, config.s, config.delta, ocfg.sigma_min, ocfg.sigma_max, ocfg.n_sigma, thresholds
                )
            except RegimeError as e:
                logger.warning(f"{e}")

        portrait = p.with_norm(cfg.portrait_norm)
        asymmetric = asymmetric_z(portrait)
        summary["portrait_norm"] = cfg.portrait_norm
        summary["z_asymmetric"] = abs(asymmetric[0].z) if asymmetric else None
        mu = asymmetric_mu(cfg.portrait_norm, p)
        if np.isfinite(mu):
            summary["quartic"] = asymmetric_norm_polynomial(p.with_mu(mu)).dict()

        orbits = phase_portrait(portrait, portrait_initial_states(cfg.portrait_orbits), cfg.t_end, cfg.dt)
        _write_csv(context, orbits, "phase_portrait.csv")
        _write_csv(context, hamiltonian_mesh(portrait), "hamiltonian.csv")

        context.results["twomode"] = summary
        _write_json(context, summary, "twomode.json")
        return context


class ContinueTask(Task):
    """
    Trace the parity branches of `families` and their asymmetric daughters

    :param families: Parent families to seed, the configured family when empty
    :param profiles: Write one state JSON per converged state
    :param db_name: [Optional] Also persist the branches into this sqlite database
    """

    def __init__(self, families: Optional[List[Symmetry]] = None, profiles: bool = False, db_name: Optional[str] = None):
        self.families = list(families or [])
        self.profiles = profiles
        self.db_name = db_name

    def run(self, context: RunContext, *args, **kwargs) -> RunContext:
        config = context.config
        basis, model = _basis(context), _model(context)

        callbacks = []
        writer = None
        if context.out_dir is not None:
            writer = CSVBranchWriter(context.out_dir, profiles=self.profiles)
            callbacks.append(writer)
        if self.db_name is not None:
            callbacks.append(SQLWriter(int(config_hash(config)[:12], 16), db_name=self.db_name, config=config))

        branches: Dict[Symmetry, List[Branch]] = {}
        for family in self.families or [config.family]:
            branches[family] = trace_family(config.copy_with(family=family), basis, model, CallbackList(callbacks))
        context.results["branches"] = branches

        if writer is not None:
            for path in writer.artifacts:
                context.add_artifact(path)
        if self.db_name is not None:
            context.add_artifact(self.db_name)

        _, events = branch_frame([b for family in branches.values() for b in family])
        logger.info(f"Traced {sum(len(b) for b in branches.values())} branches with {len(events)} events")
        return context


def _load_states(path: str) -> List[StationaryState]:
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "*.json")))
    else:
        files = [path]
    if not files:
        raise ConfigError(f"no state files under {path}", path=path)
    states = []
    for f in files:
        try:
            states.append(read_state_json(f))
        except (OSError, KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"cannot read state file {f}: {e}", path=f)
    return states


class StabilityTask(Task):
    """
    BdG stability of stored states or, without input, of the configured branch

    :param input_path: A state JSON file or a directory of them (e.g. profiles/ of a continue run)
    :param spectra: Also write the full spectra JSON
    """

    def __init__(self, input_path: Optional[str] = None, spectra: bool = False):
        self.input_path = input_path
        self.spectra = spectra

    def run(self, context: RunContext, *args, **kwargs) -> RunContext:
        config = context.config
        model = _model(context)

        if self.input_path is not None:
            if not os.path.exists(self.input_path):
                raise ConfigError(f"stability input {self.input_path} not found", path=self.input_path)
            states = _load_states(self.input_path)
            branch = Branch(label="input", family=states[0].symmetry, states=states)
        else:
            quiet = config.copy_with(continuation=config.continuation.copy(update={"follow_daughters": False}))
            seed = seed_state(model, _basis(context), config.family, config.newton)
            branch = continue_branch(seed, quiet, model)

        spectra = branch_spectra(branch, model, config.stability)
        frame = sweep_frame(branch, spectra)
        frame.insert(0, "symmetry", [state.symmetry.value for state in branch.states])
        frame["two_mode_rate"] = [self._two_mode_rate(context, s, spectrum) for s, spectrum in zip(branch.states, spectra)]
        context.results["stability"] = frame
        _write_csv(context, frame, "stability.csv")

        if self.spectra:
            rows = [
                {"mu": s.mu, "N": s.norm, "re": spectrum.eigenvalues.real, "im": spectrum.eigenvalues.imag}
                for s, spectrum in zip(branch.states, spectra)
            ]
            _write_json(context, rows, "spectra.json")
        return context

    @staticmethod
    def _two_mode_rate(context: RunContext, state: StationaryState, spectrum: BdGSpectrum) -> Optional[float]:
        """Growth rate the reduction predicts for the z = 0 point of the state's family"""
        if state.parity is None:
            return None
        p = _mode_params(context).with_norm(state.norm)
        fp = next(fp for fp in fixed_points(p) if fp.family == state.symmetry)
        check = two_mode_lambda_check(state, spectrum, fp.lambda_sq)
        if not check["classification_agrees"]:
            logger.debug(f"Two-mode and BdG stability disagree at mu={state.mu:.5f}")
        return check["two_mode_rate"]


class EvolveTask(Task):
    """
    Perturb the stationary state at dynamics.mu on the configured branch and evolve it
    """

    def run(self, context: RunContext, *args, **kwargs) -> RunContext:
        config = context.config
        cfg = config.dynamics
        basis, model = _basis(context), _model(context)

        state = state_at_mu(config, basis, cfg.mu, model)
        spectrum = state_stability(state, model, config.stability)
        run, rate = evolve_state(state, model, cfg, config.seed)

        amplitude = run.breaking_amplitude(state.parity) if state.parity is not None else np.abs(run.imbalance)
        measured = growth_rate(run.times, amplitude)
        summary = {
            "mu": state.mu,
            "N": state.norm,
            "perturbation": cfg.perturbation,
            "onset_time": run.onset_time(cfg.onset_level),
            "onset_level": cfg.onset_level,
            "bdg_rate": rate if rate is not None else spectrum.max_real_part,
            "measured_rate": measured,
            "max_norm_drift": run.max_norm_drift,
        }
        context.results["dynamics"] = summary
        context.results["evolution"] = run

        _write_json(context, summary, "dynamics.json")
        _write_csv(context, run.dataframe(), "evolution.csv")
        _write_csv(context, run.density_matrix(cfg.snapshot_every), "density.csv", index=True)
        params = _mode_params(context).with_norm(state.norm)
        _write_csv(context, _split_complex(project_phase_plane(run, basis, params)), "phase_plane.csv")
        return context


class ThermalTask(Task):
    """Screened-Poisson index change against the exponential-kernel convolution"""

    def run(self, context: RunContext, *args, **kwargs) -> RunContext:
        config = context.config
        check = screened_poisson_check(config.build_grid(), config.thermal)
        profile = pd.DataFrame({"x": check.pop("x"), "m": check.pop("m"), "convolution": check.pop("convolution")})
        context.results["thermal"] = check
        logger.info(f"Screened Poisson vs convolution: max difference {check['max_difference']:.2e}")
        _write_json(context, check, "thermal.json")
        _write_csv(context, profile, "thermal.csv")
        return context


def pipeline_for(
    command: str,
    families: Optional[List[Symmetry]] = None,
    profiles: bool = False,
    db_name: Optional[str] = None,
    input_path: Optional[str] = None,
    spectra: bool = False,
) -> Pipeline:
    """
    Tasks run by one subcommand; the linear basis is always computed first
    """
    pipeline = Pipeline([SpectrumTask()])
    if command == "spectrum":
        pass
    elif command == "overlaps":
        pipeline.append(OverlapsTask())
    elif command == "twomode":
        pipeline.append(TwoModeTask())
    elif command == "continue":
        pipeline.append(ContinueTask(families, profiles, db_name))
    elif command == "stability":
        pipeline.append(StabilityTask(input_path, spectra))
    elif command == "evolve":
        pipeline.append(EvolveTask())
    elif command == "thermal":
        pipeline = Pipeline([ThermalTask()])
    else:
        raise ConfigError(f"unknown subcommand {command}")
    return pipeline

