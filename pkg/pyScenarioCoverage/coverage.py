"""
Verification campaigns over a scenario space: the coverage ledger, specification penetration rate, scenario safe
coverage and the evolution report across redesigned policies.

Volumes are accounted with the exact cell volumes of scenario_space (fractions), so the verdict classes always sum
to the space volume.
"""

import copy
import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .enums import CampaignMode, CellTesting, Feasibility, Outcome
from .errors import BindingError, EngineError, LedgerMismatchError, LedgerModeError
from .policy import Policy
from .scenario_space import (
    ContinuousParam,
    DiscreteParam,
    Resolution,
    ScenarioCell,
    ScenarioSpace,
    enumerate_cells,
    is_full_coverage,
    threshold_ratio,
)
from .stl import StlFormula
from .stl_parser import parse, to_text
from .traffic_sim import EpisodeConfig, bind, roll_out
from .utils import LOGGER, check_enum, check_show_log, log, set_show_log
from .verification import (
    FormalEngine,
    Verdict,
    check_policy_for_mode,
    classify_feasibility,
    combine_point_outcomes,
    verify_a_posteriori,
    verify_a_priori,
)

LEDGER_FORMAT = "pyScenarioCoverage-ledger"
LEDGER_VERSION = 1
VOLUME_TOLERANCE = 1e-9
# evidence modes of campaign verdicts
FORMAL = "formal"
MIXED_SAMPLE = "mixed_sample"


@dataclass(frozen=True)
class SafetySpec:
    """
    A safety clause and its formal translation.

    Attributes
    ----------
    clause_text: str
        Natural-language clause.
    formula: StlFormula | str
        Translated formula; strings are parsed.
    """

    clause_text: str
    formula: StlFormula

    def __post_init__(self):
        if not isinstance(self.clause_text, str) or not self.clause_text.strip():
            raise ValueError("Error : a safety spec needs a non-empty clause text")
        if isinstance(self.formula, str):
            object.__setattr__(self, "formula", parse(self.formula))
        if not isinstance(self.formula, StlFormula):
            raise TypeError("formula must be an StlFormula or a formula string")

    def to_dict(self) -> dict:
        return {"clause_text": self.clause_text, "formula": to_text(self.formula)}


class CoverageLedger:
    """
    Verdict of every verification cell of a scenario space. Cells without an entry are Unverified.

    Parameters
    ----------
    space: ScenarioSpace
        Scenario space.
    res: Resolution
        Cell half widths.
    mode: CampaignMode | str
        SampleBased, Formal or Mixed.
    spec: SafetySpec
        Verified specification.
    policy: dict
        Description of the policy (Policy.to_dict()).
    cell_testing: CellTesting | str
        Check points of a cell.
    config_hash: str
        Provenance hash of the campaign config.
    """

    def __init__(
        self,
        space: ScenarioSpace,
        res: Resolution,
        mode: CampaignMode | str,
        spec: SafetySpec,
        policy: dict = None,
        cell_testing: CellTesting | str = CellTesting.Center,
        config_hash: str = "",
    ):
        self.space = space
        self.res = res
        self.mode = check_enum(mode, CampaignMode, "mode")
        self.spec = spec
        self.policy = dict(policy or {})
        self.cell_testing = check_enum(cell_testing, CellTesting, "cell_testing")
        self.config_hash = config_hash
        self.cells = enumerate_cells(space, res)
        self._cells = {c.index: c for c in self.cells}
        self.entries: dict[tuple, Verdict] = {}

    def cell(self, index) -> ScenarioCell:
        try:
            return self._cells[tuple(index)]
        except KeyError:
            raise ValueError(f"Error : cell index outside the scenario space, given : {tuple(index)}") from None

    def record(self, index, verdict: Verdict):
        self.cell(index)
        self.entries[tuple(index)] = verdict

    def outcome(self, index) -> Outcome:
        self.cell(index)
        verdict = self.entries.get(tuple(index))
        return verdict.outcome if verdict is not None else Outcome.Unverified

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def counts(self) -> dict[Outcome, int]:
        counts = {outcome: 0 for outcome in Outcome}
        for cell in self.cells:
            counts[self.outcome(cell.index)] += 1
        return counts

    def exact_volumes(self) -> dict[Outcome, Fraction]:
        volumes = {outcome: Fraction(0) for outcome in Outcome}
        for cell in self.cells:
            volumes[self.outcome(cell.index)] += cell.exact_volume
        return volumes

    def cells_with(self, outcome: Outcome) -> list[tuple]:
        return [c.index for c in self.cells if self.outcome(c.index) == outcome]

    def matches(self, other: "CoverageLedger") -> bool:
        return (
            self.space.hash == other.space.hash
            and self.res == other.res
            and to_text(self.spec.formula) == to_text(other.spec.formula)
        )

    def to_dict(self) -> dict:
        cells = []
        for cell in self.cells:
            verdict = self.entries.get(cell.index)
            if verdict is None:
                continue
            cells.append(
                {
                    "index": list(cell.index),
                    "params": self.space.scenario_parameters(cell.center),
                    "outcome": verdict.outcome.value,
                    "evidence": verdict.to_dict()["evidence"],
                }
            )
        return {
            "format": LEDGER_FORMAT,
            "version": LEDGER_VERSION,
            "config_hash": self.config_hash,
            "space": self.space.to_dict(),
            "space_hash": self.space.hash,
            "resolution": self.res.to_dict(),
            "mode": self.mode.value,
            "cell_testing": self.cell_testing.value,
            "policy": self.policy,
            "spec": self.spec.to_dict(),
            "cells": cells,
            "statistics": coverage_report(self).to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path: str):
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def from_dict(cls, data: dict) -> "CoverageLedger":
        if data.get("format") != LEDGER_FORMAT or data.get("version") != LEDGER_VERSION:
            raise ValueError(f"Not a coverage ledger (version {LEDGER_VERSION}), given : {data.get('format')}")
        space_data = data["space"]
        space = ScenarioSpace(
            space_data["odd_name"],
            tuple(ContinuousParam(p["name"], p["lower"], p["upper"]) for p in space_data["continuous"]),
            tuple(DiscreteParam(p["name"], tuple(p["values"])) for p in space_data["discrete"]),
        )
        if space.hash != data["space_hash"]:
            raise ValueError(f"Error : ledger space hash mismatch, given : {data['space_hash']}")
        spec = SafetySpec(data["spec"]["clause_text"], data["spec"]["formula"])
        ledger = cls(
            space,
            Resolution(tuple(data["resolution"]["half_widths"])),
            data["mode"],
            spec,
            data.get("policy"),
            data.get("cell_testing", CellTesting.Center.value),
            data.get("config_hash", ""),
        )
        for entry in data["cells"]:
            ledger.record(entry["index"], Verdict(entry["outcome"], spec.formula, entry["evidence"]))
        return ledger

    @classmethod
    def load(cls, path: str) -> "CoverageLedger":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def safe_coverage(ledger: CoverageLedger) -> float:
    """
    Scenario safe coverage: SafeVerified volume over the space volume. Unknown and Unverified cells never count.
    """
    return float(ledger.exact_volumes()[Outcome.SafeVerified] / ledger.space.exact_volume)


def formal_volume(ledger: CoverageLedger) -> Fraction:
    """Volume of the SafeVerified cells backed by formal evidence."""
    volume = Fraction(0)
    for cell in ledger.cells:
        verdict = ledger.entries.get(cell.index)
        if verdict is not None and verdict.outcome == Outcome.SafeVerified and verdict.evidence.get("mode") == FORMAL:
            volume += cell.exact_volume
    return volume


def penetration_rate(ledger: CoverageLedger) -> float:
    """
    Specification penetration rate: formally verified volume over the space volume minus the volume
    proven SafetyInfeasible. Returns 1 when both are 0. Cells a Mixed campaign verified by sampling do not count.

    Raises
    ------
    LedgerModeError
        On a SampleBased ledger, which cannot prove infeasibility.
    """
    if ledger.mode == CampaignMode.SampleBased:
        raise LedgerModeError("The penetration rate needs a Formal or Mixed ledger")
    volumes = ledger.exact_volumes()
    claimable = ledger.space.exact_volume - volumes[Outcome.SafetyInfeasible]
    holding = formal_volume(ledger)
    if claimable == 0:
        return 1.0
    return float(holding / claimable)


@dataclass(frozen=True)
class CoverageReport:
    """
    Statistics of a ledger.

    Attributes
    ----------
    safe_coverage: float
        SafeVerified volume / space volume.
    penetration_rate: float | None
        None for SampleBased ledgers.
    formal_coverage: float | None
        Share of safe_coverage backed by formal evidence, None for SampleBased ledgers. Only this share is bounded
        by the penetration rate; Mixed ledgers may hold sample-verified cells on top.
    threshold_r: float
        SafeVerified cell count / cell count.
    verified_volume, unsafe_volume, infeasible_volume, unknown_volume, unverified_volume: float
        Volume of each verdict class; they sum to space_volume.
    full_coverage: bool
        The verified volume covers the whole space.
    """

    mode: CampaignMode
    safe_coverage: float
    penetration_rate: float | None
    threshold_r: float
    space_volume: float
    verified_volume: float
    unsafe_volume: float
    infeasible_volume: float
    unknown_volume: float
    unverified_volume: float
    full_coverage: bool
    counts: dict = field(default_factory=dict)
    formal_coverage: float | None = None

    def __post_init__(self):
        ratios = [self.safe_coverage, self.threshold_r]
        if self.penetration_rate is not None:
            ratios.append(self.penetration_rate)
            formal = self.safe_coverage if self.formal_coverage is None else self.formal_coverage
            if formal > self.penetration_rate + VOLUME_TOLERANCE:
                raise ValueError("Error : safe coverage cannot exceed the penetration rate")
        if any(r < 0 or r > 1 for r in ratios):
            raise ValueError(f"Error : coverage ratios must lie in [0,1], given : {ratios}")
        total = (
            self.verified_volume
            + self.unsafe_volume
            + self.infeasible_volume
            + self.unknown_volume
            + self.unverified_volume
        )
        if abs(total - self.space_volume) > VOLUME_TOLERANCE * self.space_volume:
            raise ValueError(f"Error : verdict volumes sum to {total}, space volume is {self.space_volume}")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "safe_coverage": self.safe_coverage,
            "penetration_rate": self.penetration_rate,
            "threshold_r": self.threshold_r,
            "space_volume": self.space_volume,
            "verified_volume": self.verified_volume,
            "unsafe_volume": self.unsafe_volume,
            "infeasible_volume": self.infeasible_volume,
            "unknown_volume": self.unknown_volume,
            "unverified_volume": self.unverified_volume,
            "full_coverage": self.full_coverage,
            "counts": dict(sorted(self.counts.items())),
            "formal_coverage": self.formal_coverage,
        }


def coverage_report(ledger: CoverageLedger) -> CoverageReport:
    volumes = ledger.exact_volumes()
    counts = ledger.counts()
    verified = float(volumes[Outcome.SafeVerified])
    sampled = ledger.mode == CampaignMode.SampleBased
    return CoverageReport(
        mode=ledger.mode,
        safe_coverage=safe_coverage(ledger),
        penetration_rate=None if sampled else penetration_rate(ledger),
        threshold_r=threshold_ratio(counts[Outcome.SafeVerified], ledger.n_cells),
        space_volume=float(ledger.space.exact_volume),
        verified_volume=verified,
        unsafe_volume=float(volumes[Outcome.UnsafeObserved]),
        infeasible_volume=float(volumes[Outcome.SafetyInfeasible]),
        unknown_volume=float(volumes[Outcome.Unknown]),
        unverified_volume=float(volumes[Outcome.Unverified]),
        full_coverage=is_full_coverage(verified, ledger.space),
        counts={outcome.value: n for outcome, n in counts.items()},
        formal_coverage=None if sampled else float(formal_volume(ledger) / ledger.space.exact_volume),
    )


def write_matrix_csv(ledger: CoverageLedger, path: str):
    """
    One row per cell: indices, center parameter values and verdict, for heat-map plotting.
    """
    names = ledger.space.names
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"idx_{n}" for n in names] + names + ["outcome"])
        for cell in ledger.cells:
            params = ledger.space.scenario_parameters(cell.center)
            values = [repr(params[n]) if isinstance(params[n], float) else params[n] for n in names]
            writer.writerow([str(i) for i in cell.index] + values + [ledger.outcome(cell.index).value])


def _formal_verdict(cfg: EpisodeConfig, policy: Policy, spec: SafetySpec, engine: FormalEngine) -> Verdict:
    verdict = verify_a_priori(cfg, policy, spec.formula, engine=engine)
    evidence = {**verdict.evidence, "mode": FORMAL}
    if verdict.outcome == Outcome.SafeVerified:
        return Verdict(verdict.outcome, spec.formula, evidence)
    feasibility = classify_feasibility(cfg, spec.formula, engine)
    evidence["feasibility"] = feasibility.to_dict()
    if feasibility.status == Feasibility.SafetyInfeasible:
        evidence["ics_status"] = feasibility.ics_status.value
        return Verdict(Outcome.SafetyInfeasible, spec.formula, evidence)
    return Verdict(verdict.outcome, spec.formula, evidence)


class Campaign:
    """
    One verification campaign.

    Parameters
    ----------
    space: ScenarioSpace
        Scenario space.
    res: Resolution
        Cell half widths.
    spec: SafetySpec
        Specification to verify.
    policy: Policy
        Ego policy.
    mode: CampaignMode | str
        SampleBased (roll out and replay), Formal (a priori verification, feasibility check on failures) or Mixed
        (formal verdict when decisive, sample-based otherwise).
    episode: EpisodeConfig
        Episode template; its binding maps the scenario parameters onto the episode.
    engine: FormalEngine
        Formal engine numerics, cell testing mode and worker count.
    config_hash: str
        Provenance hash written into the ledger.
    trace_dir: str
        If given, every rolled-out trace is written there as CSV.
    show_log: bool | str
        If True, all logs are printed. If "Status", only status logs. If False, only warnings.
    """

    def __init__(
        self,
        space: ScenarioSpace,
        res: Resolution,
        spec: SafetySpec,
        policy: Policy,
        mode: CampaignMode | str,
        episode: EpisodeConfig,
        engine: FormalEngine = None,
        config_hash: str = "",
        trace_dir: str = None,
        show_log: bool | str = False,
    ):
        check_show_log(show_log)
        self.space = space
        self.res = res
        self.spec = spec
        self.policy = policy
        self.mode = check_enum(mode, CampaignMode, "mode")
        self.episode = episode
        self.engine = engine or FormalEngine()
        self.config_hash = config_hash
        self.trace_dir = trace_dir
        self.show_log = show_log
        res.check_against(space)
        check_policy_for_mode(policy, self.mode == CampaignMode.Formal)

    def _trace_path(self, cell: ScenarioCell, point: int) -> str | None:
        if self.trace_dir is None:
            return None
        return os.path.join(self.trace_dir, f"cell_{'_'.join(str(i) for i in cell.index)}_p{point}.csv")

    def _sample_verdict(self, cfg: EpisodeConfig, policy: Policy, trace_path: str = None) -> Verdict:
        trace = roll_out(cfg, policy)
        verdict = verify_a_posteriori(trace, self.spec.formula)
        if trace_path is not None:
            trace.to_csv(trace_path)
            verdict.evidence["trace"] = os.path.basename(trace_path)
        return verdict

    def _point_verdict(self, cfg: EpisodeConfig, policy: Policy, trace_path: str = None) -> Verdict:
        if self.mode == CampaignMode.SampleBased:
            return self._sample_verdict(cfg, policy, trace_path)
        if self.mode == CampaignMode.Formal:
            return _formal_verdict(cfg, policy, self.spec, self.engine)
        if policy.admits_set_propagation:
            verdict = _formal_verdict(cfg, policy, self.spec, self.engine)
            if verdict.outcome in (Outcome.SafeVerified, Outcome.SafetyInfeasible, Outcome.UnsafeObserved):
                return verdict
        fallback = self._sample_verdict(cfg, policy, trace_path)
        fallback.evidence["mode"] = MIXED_SAMPLE
        return fallback

    def verify_cell(self, cell: ScenarioCell) -> Verdict:
        """
        Verdict of one cell, combined over its check points.

        Raises
        ------
        BindingError
            Naming the cell when its parameters cannot be bound to the episode.
        """
        policy = copy.deepcopy(self.policy)
        points = cell.check_points(corners=self.engine.cell_testing == CellTesting.Corners)
        verdicts = []
        for j, point in enumerate(points):
            try:
                cfg = bind(self.episode, self.space.scenario_parameters(point))
            except BindingError as e:
                raise BindingError(f"Cell {cell.index}: {e}") from None
            try:
                verdicts.append(self._point_verdict(cfg, policy, self._trace_path(cell, j)))
            except (ValueError, TypeError):
                raise
            except Exception as e:
                raise EngineError(f"Cell {cell.index}: {type(e).__name__}: {e}") from e
        if len(verdicts) == 1:
            return verdicts[0]
        outcome = combine_point_outcomes([v.outcome for v in verdicts])
        evidence = {"points": [v.to_dict()["evidence"] for v in verdicts]}
        modes = {v.evidence.get("mode") for v in verdicts}
        evidence["mode"] = modes.pop() if len(modes) == 1 else MIXED_SAMPLE
        for v in verdicts:
            if v.outcome == outcome:
                evidence.update({k: v.evidence[k] for k in ("violation_index", "ics_status") if k in v.evidence})
                break
        return Verdict(outcome, self.spec.formula, evidence)

    def run(self, cells: list[ScenarioCell] = None) -> CoverageLedger:
        """
        Verify the given cells (all cells by default) and return the ledger. Cells are verified by a pool of
        engine.jobs threads and merged in index order, so the ledger does not depend on the worker count.
        """
        set_show_log(self.show_log)
        ledger = CoverageLedger(
            self.space,
            self.res,
            self.mode,
            self.spec,
            self.policy.to_dict(),
            self.engine.cell_testing,
            self.config_hash,
        )
        cells = ledger.cells if cells is None else cells
        if self.trace_dir is not None:
            os.makedirs(self.trace_dir, exist_ok=True)
        log(f"{self.mode.value} campaign of {self.policy.name} over {len(cells)} cells, {self.engine.jobs} jobs")
        if self.engine.jobs == 1:
            results = {cell.index: self.verify_cell(cell) for cell in cells}
        else:
            with ThreadPoolExecutor(max_workers=self.engine.jobs) as pool:
                futures = {cell.index: pool.submit(self.verify_cell, cell) for cell in cells}
                results = {index: future.result() for index, future in futures.items()}
        for index in sorted(results):
            ledger.record(index, results[index])
            if self.show_log is True:
                log("", f"cell {index}: {results[index].outcome.value}")
        report = coverage_report(ledger)
        log(f"Campaign done: safe coverage {report.safe_coverage:.4f}, counts {report.counts}")
        return ledger


def run_campaign(
    space: ScenarioSpace,
    res: Resolution,
    spec: SafetySpec,
    policy: Policy,
    mode: CampaignMode | str,
    episode: EpisodeConfig,
    engine: FormalEngine = None,
    cells: list[ScenarioCell] = None,
    config_hash: str = "",
    trace_dir: str = None,
    show_log: bool | str = False,
) -> CoverageLedger:
    """
    Run a campaign and return its ledger. See Campaign for the parameters; `cells` restricts the run to a subset
    (the other cells stay Unverified).
    """
    campaign = Campaign(space, res, spec, policy, mode, episode, engine, config_hash, trace_dir, show_log)
    return campaign.run(cells)


@dataclass(frozen=True)
class EvolutionReport:
    """
    Remediation summary across ledgers of successive policy designs.

    Attributes
    ----------
    iterations: list[dict]
        Per ledger: policy, counts and volumes of each verdict class.
    deltas: list[dict]
        Per consecutive pair: change of the volume of each verdict class.
    converged: bool
        The UnsafeObserved volume changed by less than one unit volume over the last iteration. A single ledger has
        no iteration to compare: it counts as converged only when it has no UnsafeObserved cell.
    monotone: bool
        The UnsafeObserved volume never grew.
    target_cells: list[tuple]
        Failing cells of the last ledger, the redesign target set.
    """

    iterations: list
    deltas: list
    converged: bool
    monotone: bool
    target_cells: list

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "deltas": self.deltas,
            "converged": self.converged,
            "monotone": self.monotone,
            "target_cells": [list(c) for c in self.target_cells],
        }


def evolution_report(ledgers: list[CoverageLedger]) -> EvolutionReport:
    """
    Compare ledgers of the same space, resolution and formula in order.

    Raises
    ------
    LedgerMismatchError
        If the ledgers do not share the space, resolution and formula.
    """
    if not ledgers:
        raise ValueError("Error : evolution report needs at least one ledger")
    first = ledgers[0]
    for other in ledgers[1:]:
        if not first.matches(other):
            raise LedgerMismatchError("Ledgers do not share the scenario space, resolution and formula")
    unit = 1
    for w in first.res.half_widths:
        unit *= 2 * Fraction(w)

    iterations, unsafe = [], []
    for ledger in ledgers:
        volumes = ledger.exact_volumes()
        iterations.append(
            {
                "policy": ledger.policy.get("name", ""),
                "counts": {o.value: n for o, n in ledger.counts().items()},
                "volumes": {o.value: float(v) for o, v in volumes.items()},
            }
        )
        unsafe.append(volumes[Outcome.UnsafeObserved])
    deltas = []
    for before, after in zip(ledgers, ledgers[1:]):
        v0, v1 = before.exact_volumes(), after.exact_volumes()
        deltas.append({o.value: float(v1[o] - v0[o]) for o in Outcome})
    if len(ledgers) == 1:
        converged = unsafe[0] == 0
    else:
        converged = abs(unsafe[-1] - unsafe[-2]) < unit
    monotone = all(b <= a for a, b in zip(unsafe, unsafe[1:]))
    target = ledgers[-1].cells_with(Outcome.UnsafeObserved)
    if converged and target:
        LOGGER.warning(f"Policy evolution converged with {len(target)} failing cells left")
    return EvolutionReport(iterations, deltas, converged, monotone, target)


def run_evolution(
    space: ScenarioSpace,
    res: Resolution,
    spec: SafetySpec,
    policies: list[Policy],
    mode: CampaignMode | str,
    episode: EpisodeConfig,
    engine: FormalEngine = None,
    show_log: bool | str = False,
) -> tuple[list[CoverageLedger], EvolutionReport]:
    """
    Run one campaign per policy design, in order, and summarize the evolution.
    """
    ledgers = [run_campaign(space, res, spec, p, mode, episode, engine, show_log=show_log) for p in policies]
    return ledgers, evolution_report(ledgers)
