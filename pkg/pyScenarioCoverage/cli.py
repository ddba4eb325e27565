"""
Command-line front end.

    scenario-coverage volume CONFIG
    scenario-coverage verify CONFIG [--mode sample|formal|mixed] [--cell I,J] [--jobs N] [--out LEDGER]
    scenario-coverage report LEDGER [LEDGER ...] [--out REPORT] [--matrix CSV]
    scenario-coverage reach CONFIG [--spec-kind KIND] [--out FILE]

Exit codes: 0 success, 1 engine error, 2 config error. Flags only choose paths, verbosity, mode and worker count.
"""

import argparse
import dataclasses
import json
import os
import sys

from . import config as config_module
from .coverage import CoverageLedger, coverage_report, evolution_report, run_campaign, write_matrix_csv
from .enums import CampaignMode, ExitCode, SpecKind
from .errors import BindingError, ConfigError, EngineError, LedgerMismatchError, LedgerModeError, PolicyKindError
from .scenario_space import enumerate_cells, required_samples, space_volume, unit_volume
from .utils import LOGGER, set_show_log

MODES = {"sample": CampaignMode.SampleBased, "formal": CampaignMode.Formal, "mixed": CampaignMode.Mixed}
LOG_LEVELS = {"none": False, "status": "Status", "all": True}
REPORT_FORMAT = "pyScenarioCoverage-report"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path: str, text: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


def _parse_cell(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"Cell index must be comma separated integers, given : {text}", "--cell") from None


def cmd_volume(args) -> int:
    cfg = config_module.load(args.config)
    cells = enumerate_cells(cfg.space, cfg.resolution)
    print(f"config_hash: {cfg.hash}")
    print(f"V_S: {space_volume(cfg.space)!r}")
    print(f"V_0: {unit_volume(cfg.space, cfg.resolution)!r}")
    print(f"n: {required_samples(cfg.space, cfg.resolution)}")
    print(f"cells: {len(cells)}")
    return ExitCode.Success.value


def cmd_verify(args) -> int:
    cfg = config_module.load(args.config)
    engine = cfg.engine if args.jobs is None else dataclasses.replace(cfg.engine, jobs=args.jobs)
    cells = None
    if args.cell is not None:
        index = _parse_cell(args.cell)
        matching = [c for c in enumerate_cells(cfg.space, cfg.resolution) if c.index == index]
        if not matching:
            raise ConfigError(f"Cell index outside the scenario space, given : {index}", "--cell")
        cells = matching
    ledger = run_campaign(
        cfg.space,
        cfg.resolution,
        cfg.spec,
        cfg.policy,
        MODES[args.mode],
        cfg.episode,
        engine,
        cells=cells,
        config_hash=cfg.hash,
        trace_dir=cfg.output.get("traces"),
        show_log=LOG_LEVELS[args.log],
    )
    out = args.out or cfg.output.get("ledger")
    if out:
        ledger.save(out)
    if cfg.output.get("matrix"):
        write_matrix_csv(ledger, cfg.output["matrix"])
    if cfg.output.get("report"):
        _write(cfg.output["report"], _dump(_report_dict([ledger])))
    print(_dump(coverage_report(ledger).to_dict()), end="")
    return ExitCode.Success.value


def _report_dict(ledgers: list[CoverageLedger]) -> dict:
    report = {
        "format": REPORT_FORMAT,
        "version": 1,
        "ledgers": [
            {"config_hash": ledger.config_hash, "policy": ledger.policy, **coverage_report(ledger).to_dict()}
            for ledger in ledgers
        ],
    }
    if len(ledgers) > 1:
        report["evolution"] = evolution_report(ledgers).to_dict()
    return report


def cmd_report(args) -> int:
    ledgers = []
    for path in args.ledgers:
        try:
            ledgers.append(CoverageLedger.load(path))
        except (OSError, KeyError, ValueError) as e:
            raise ConfigError(f"Cannot read ledger: {e}", path) from None
    text = _dump(_report_dict(ledgers))
    if args.out:
        _write(args.out, text)
    if args.matrix:
        write_matrix_csv(ledgers[-1], args.matrix)
    print(text, end="")
    return ExitCode.Success.value


def cmd_reach(args) -> int:
    cfg = config_module.load(args.config)
    if cfg.reach is None:
        raise ConfigError("The config has no reach block", "reach")
    result = cfg.reach.compute(args.spec_kind, LOG_LEVELS[args.log])
    out = args.out or cfg.output.get("reach")
    if out:
        result.export(out, cfg.hash)
    else:
        print(result.to_text(cfg.hash), end="")
    return ExitCode.Success.value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenario-coverage", description="Scenario coverage verification.")
    parser.add_argument("--log", choices=sorted(LOG_LEVELS), default="none", help="log verbosity")
    sub = parser.add_subparsers(dest="command", required=True)

    volume = sub.add_parser("volume", help="scenario space volume, unit volume and required sample count")
    volume.add_argument("config")
    volume.set_defaults(func=cmd_volume)

    verify = sub.add_parser("verify", help="run a verification campaign and write the ledger")
    verify.add_argument("config")
    verify.add_argument("--mode", choices=list(MODES), default="sample")
    verify.add_argument("--cell", help="verify one cell, e.g. 3 or 3,0")
    verify.add_argument("--jobs", type=int, help="worker count")
    verify.add_argument("--out", help="ledger path")
    verify.set_defaults(func=cmd_verify)

    report = sub.add_parser("report", help="coverage report (and evolution summary) of ledgers")
    report.add_argument("ledgers", nargs="+")
    report.add_argument("--out", help="report path")
    report.add_argument("--matrix", help="CSV matrix of the last ledger")
    report.set_defaults(func=cmd_report)

    reach = sub.add_parser("reach", help="compute a reachable set and export it")
    reach.add_argument("config")
    reach.add_argument("--spec-kind", choices=[k.value for k in SpecKind])
    reach.add_argument("--out", help="set export path")
    reach.set_defaults(func=cmd_reach)
    return parser


def main(argv: list[str] = None) -> int:
    args = build_parser().parse_args(argv)
    set_show_log(LOG_LEVELS[args.log])
    try:
        return args.func(args)
    except (ConfigError, BindingError, PolicyKindError, LedgerMismatchError, LedgerModeError) as e:
        LOGGER.error(f"{ExitCode.ConfigError.message} {e}")
        return ExitCode.ConfigError.value
    except (EngineError, ValueError, OSError) as e:
        LOGGER.error(f"{ExitCode.EngineError.message} {e}")
        return ExitCode.EngineError.value


if __name__ == "__main__":
    sys.exit(main())
