from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

from loguru import logger
from pydantic import ValidationError

from ..core.config import RunConfig, Symmetry, field_errors, load_config
from ..core.exceptions import ConfigError, NLSToolsError
from ..core.task import RunContext
from ..writers.csvwriter import to_jsonable, write_json, write_manifest
from .presets import get_preset, regress
from .tasks import pipeline_for

SUBCOMMANDS = ("spectrum", "overlaps", "twomode", "continue", "stability", "evolve", "thermal", "regress")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _emit_error(payload: dict, output_dir: Optional[str]):
    logger.error(payload.get("message", ""))
    print(json.dumps(to_jsonable(payload), sort_keys=True))
    if output_dir is not None and os.path.isdir(output_dir):
        write_json(payload, os.path.join(output_dir, "error.json"))


def _make_output_dir(output_dir: str):
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {output_dir}: {e}", path=output_dir)


def _resolve_config(config_path: Optional[str], preset: Optional[str], seed: Optional[int]) -> RunConfig:
    """A config file takes precedence over the preset's config"""
    if config_path is None and preset is not None:
        config = get_preset(preset).config
    else:
        config = load_config(config_path)
    if seed is not None:
        config = config.copy_with(seed=seed)
    return config


def _run_regress(preset_name: Optional[str], output_dir: str, seed: Optional[int]) -> int:
    if preset_name is None:
        raise ConfigError("regress needs --preset")
    preset = get_preset(preset_name)
    if seed is not None:
        preset = preset.copy(update={"config": preset.config.copy_with(seed=seed)})

    _make_output_dir(output_dir)
    report = regress(preset, output_dir)
    report.dataframe().to_csv(os.path.join(output_dir, "regress.csv"), index=False)
    write_json(report.dict(), os.path.join(output_dir, "regress.json"))
    artifacts = [os.path.join(output_dir, name) for name in sorted(os.listdir(output_dir)) if name != "manifest.json"]
    write_manifest(output_dir, artifacts, preset.config, "regress", extra={"preset": preset.name, "status": report.status})

    print(report.table())
    return EXIT_OK if report.passed else EXIT_FAILED


def run_subcommand(
    name: str,
    config_path: Optional[str] = None,
    output_dir: Optional[str] = None,
    seed: Optional[int] = None,
    preset: Optional[str] = None,
    families: Optional[List[Symmetry]] = None,
    profiles: bool = False,
    db_name: Optional[str] = None,
    input_path: Optional[str] = None,
    spectra: bool = False,
) -> int:
    """
    Run one subcommand into `output_dir` and return its exit status

    Every run leaves a manifest.json naming its artifacts and the config hash. Failures
    print a JSON error object ({"error", "message", ...}) to stdout and return nonzero.
    """
    output_dir = output_dir or f"nlstools-{name}"
    try:
        if name not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {name}, expected one of {', '.join(SUBCOMMANDS)}")
        if name == "regress":
            return _run_regress(preset, output_dir, seed)

        config = _resolve_config(config_path, preset, seed)
        if not families and preset is not None:
            families = get_preset(preset).families

        _make_output_dir(output_dir)
        context = RunContext(config, output_dir)
        pipeline = pipeline_for(
            name, families=families, profiles=profiles, db_name=db_name, input_path=input_path, spectra=spectra
        )
        pipeline.run(context)
        write_manifest(output_dir, context.artifacts, config, name, extra={"seed": config.seed})
        return EXIT_OK
    except ConfigError as e:
        _emit_error(e.to_dict(), output_dir)
        return EXIT_CONFIG
    except ValidationError as e:
        errors = field_errors(e)
        _emit_error({"error": "ConfigError", "message": f"{len(errors)} invalid field(s)", "path": None, "fields": errors}, output_dir)
        return EXIT_CONFIG
    except NLSToolsError as e:
        _emit_error({"error": type(e).__name__, "message": e.msg}, output_dir)
        return EXIT_FAILED
    except Exception as e:
        logger.opt(exception=e).debug("unhandled error")
        _emit_error({"error": type(e).__name__, "message": str(e)}, output_dir)
        return EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults when omitted)")
    common.add_argument("--out", help="Output directory of the run")
    common.add_argument("--seed", type=int, help="Override the random seed of the config")
    common.add_argument("--preset", help="Named scenario preset")
    common.add_argument("--log-level", default="INFO", help="loguru level of the stderr sink")

    parser = argparse.ArgumentParser(prog="nlstools", description="Nonlocal cubic-quintic NLS double-well toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name, parents=[common])
        if name == "continue":
            sub.add_argument(
                "--family",
                action="append",
                choices=[Symmetry.symmetric.value, Symmetry.antisymmetric.value],
                help="Parent branch to trace (repeatable)",
            )
            sub.add_argument("--profiles", action="store_true", help="Write one profile JSON per state")
            sub.add_argument("--db", help="Also persist branches into this sqlite database")
        elif name == "stability":
            sub.add_argument("--input", help="State JSON file or directory of state files")
            sub.add_argument("--spectra", action="store_true", help="Write the full spectra JSON")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    logger.remove()
    logger.add(sys.stderr, level=args.log_level.upper())

    families = [Symmetry(f) for f in getattr(args, "family", None) or []]
    return run_subcommand(
        args.command,
        config_path=args.config,
        output_dir=args.out,
        seed=args.seed,
        preset=args.preset,
        families=families,
        profiles=getattr(args, "profiles", False),
        db_name=getattr(args, "db", None),
        input_path=getattr(args, "input", None),
        spectra=getattr(args, "spectra", False),
    )


if __name__ == "__main__":
    sys.exit(main())
