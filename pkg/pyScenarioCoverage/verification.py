"""
Per-scenario safety verdicts: a posteriori (trace replay) and a priori (closed-loop tubes) verification, feasibility
classification through the inevitable collision state analysis, and liability determination.

The formal engine works on the relative longitudinal model (gap, ego_v, lead_v) between the ego and the nearest
agent ahead in its lane.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicalSystem
from .enums import CellTesting, Feasibility, IcsStatus, LiabilityRationale, Outcome, PolicyKind
from .errors import PolicyKindError
from .grid import GridGeometry, StateSet
from .policy import Policy
from .reachability import closed_loop_tube, ics_analysis, n_steps, unsafe_set
from .stl import Always, And, Atom, StlFormula
from .stl_monitor import TIME_TOLERANCE, Signal, StlMonitor, monitor_report
from .stl_parser import to_text
from .traffic_sim import LARGE_GAP, EpisodeConfig, initial_channels, lead_agent_index, roll_out
from .utils import check_enum, check_positive, log

FORMAL_STATE = ("gap", "ego_v", "lead_v")


@dataclass(frozen=True)
class Verdict:
    """
    Safety verdict of one scenario.

    Attributes
    ----------
    outcome: Outcome
        SafeVerified, UnsafeObserved, SafetyInfeasible or Unknown.
    spec: StlFormula
        Formula the verdict refers to.
    evidence: dict
        Supporting data: "violation_index" for UnsafeObserved, "ics_status" = "Inevitable" for SafetyInfeasible,
        plus flags (truncation, clipped tubes) and a free-text "reason".
    """

    outcome: Outcome
    spec: StlFormula = None
    evidence: dict = field(default_factory=dict)

    def __post_init__(self):
        outcome = check_enum(self.outcome, Outcome, "outcome")
        if outcome == Outcome.Unverified:
            raise ValueError("Error : a verdict cannot be Unverified")
        if outcome == Outcome.SafetyInfeasible and self.evidence.get("ics_status") != IcsStatus.Inevitable.value:
            raise ValueError("Error : a SafetyInfeasible verdict needs Inevitable ICS evidence")
        if outcome == Outcome.UnsafeObserved and "violation_index" not in self.evidence:
            raise ValueError("Error : an UnsafeObserved verdict needs the index of the falsifying sample")
        object.__setattr__(self, "outcome", outcome)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "spec": to_text(self.spec) if self.spec is not None else None,
            "evidence": {k: self.evidence[k] for k in sorted(self.evidence)},
        }


@dataclass(frozen=True)
class FeasibilityResult:
    status: Feasibility
    ics_status: IcsStatus = None
    reason: str = ""
    state: tuple = None

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "ics_status": self.ics_status.value if self.ics_status else None,
            "reason": self.reason,
            "state": list(self.state) if self.state is not None else None,
        }


@dataclass(frozen=True)
class LiabilityFinding:
    """
    Outcome of the liability rule table.

    Attributes
    ----------
    at_fault: bool
        True iff the rationale is SpecViolatedAvoidable or UnavoidableNoFallback.
    rationale: LiabilityRationale
    reason: str
        Explanation, mandatory when the finding is withheld.
    evidence: dict
        Violation index, decisive sample, fallback window, ...
    """

    at_fault: bool
    rationale: LiabilityRationale
    reason: str = ""
    evidence: dict = field(default_factory=dict)

    def __post_init__(self):
        rationale = check_enum(self.rationale, LiabilityRationale, "rationale")
        object.__setattr__(self, "rationale", rationale)
        if bool(self.at_fault) != rationale.at_fault:
            raise ValueError(f"Error : at_fault must be {rationale.at_fault} for {rationale.value}")
        if rationale == LiabilityRationale.FindingWithheld and not self.reason:
            raise ValueError("Error : a withheld finding needs a reason")


@dataclass(frozen=True)
class FormalEngine:
    """
    Numerics of the formal engine.

    Attributes
    ----------
    grid_lower, grid_upper, grid_counts: tuple
        Grid over (gap, ego_v, lead_v).
    step: float
        Set propagation step in seconds.
    lookahead: float
        A priori tube length.
    decision_period: float
        Time between two a priori tubes along the episode.
    ics_horizon: float
        Horizon of the inevitable collision state analysis (cover the longest stopping time).
    input_splits, input_samples: int
        Control sub-boxes (inevitable set) and sample points (evasion search).
    cell_testing: CellTesting
        Scenario cell checked at its center or at its center and corners.
    jobs: int
        Campaign worker threads.
    """

    grid_lower: tuple = (-6.0, -6.0, -0.01)
    grid_upper: tuple = (44.0, 23.0, 0.01)
    grid_counts: tuple = (2000, 580, 1)
    step: float = 0.25
    lookahead: float = 2.0
    decision_period: float = 0.5
    ics_horizon: float = 4.5
    input_splits: int = 1
    input_samples: int = 5
    cell_testing: CellTesting = CellTesting.Center
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "cell_testing", check_enum(self.cell_testing, CellTesting, "cell_testing"))
        for name in ("step", "lookahead", "decision_period", "ics_horizon"):
            check_positive(getattr(self, name), f"engine.{name}")
        n_steps(self.lookahead, self.step)
        n_steps(self.ics_horizon, self.step)
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ValueError(f"Error : engine.jobs must be a positive integer, given : {self.jobs}")
        self.geometry()

    def geometry(self) -> GridGeometry:
        return GridGeometry(self.grid_lower, self.grid_upper, self.grid_counts, list(FORMAL_STATE))

    def system(self, cfg: EpisodeConfig) -> DynamicalSystem:
        """Relative longitudinal model: ego acceleration box from the ego, lead acceleration box from the lead."""
        lead = lead_agent_index(cfg)
        d_lo, d_hi = cfg.agents[lead].acceleration_bounds() if lead is not None else (0.0, 0.0)
        return DynamicalSystem(
            "relative_longitudinal",
            [cfg.ego.u_lower[-1]],
            [cfg.ego.u_upper[-1]],
            self.grid_lower,
            self.grid_upper,
            [d_lo],
            [d_hi],
        )

    def to_dict(self) -> dict:
        return {
            "grid_lower": list(self.grid_lower),
            "grid_upper": list(self.grid_upper),
            "grid_counts": list(self.grid_counts),
            "step": self.step,
            "lookahead": self.lookahead,
            "decision_period": self.decision_period,
            "ics_horizon": self.ics_horizon,
            "input_splits": self.input_splits,
            "input_samples": self.input_samples,
            "cell_testing": self.cell_testing.value,
            "jobs": self.jobs,
        }


def formal_state(channels: dict) -> list[float]:
    return [float(channels[name]) for name in FORMAL_STATE]


def _trace_state(trace: Signal, k: int) -> list[float]:
    return [float(trace.channel(name)[k]) for name in FORMAL_STATE]


def violation_index(trace: Signal, formula: StlFormula) -> int:
    """
    First sample responsible for a violation at t0: for a top-level Always (possibly inside a conjunction) the first
    sample of its window where the argument fails, otherwise 0.
    """
    node = formula
    while isinstance(node, And):
        left_holds = StlMonitor(node.left).evaluate(trace).values[0]
        node = node.right if left_holds else node.left
    if not isinstance(node, Always):
        return 0
    child = StlMonitor(node.arg).evaluate(trace).values
    rel = trace.times - trace.times[0]
    window = (rel >= node.interval.lo - TIME_TOLERANCE) & (rel <= node.interval.hi + TIME_TOLERANCE)
    failing = np.flatnonzero(window & ~child)
    return int(failing[0]) if failing.size else 0


def verify_a_posteriori(trace: Signal, formula: StlFormula, strict: bool = False) -> Verdict:
    """
    Replay a finished episode against a formula.

    Parameters
    ----------
    trace: Signal
        Recorded episode.
    formula: StlFormula
        Safety formula.
    strict: bool
        Raise on vacuous windows instead of flagging them.

    Returns
    -------
    SafeVerified iff the trace satisfies the formula at its first sample, UnsafeObserved otherwise with the
    falsifying sample index and time attached.
    """
    result = monitor_report(trace, formula, strict)
    evidence = {
        "mode": "a_posteriori",
        "samples": len(trace),
        "truncated": bool(result.truncated or trace.metadata.get("truncated", False)),
        "vacuous": result.vacuous,
    }
    if "seed" in trace.metadata:
        evidence["seed"] = trace.metadata["seed"]
    if result.values[0]:
        return Verdict(Outcome.SafeVerified, formula, evidence)
    k = violation_index(trace, formula)
    evidence.update(violation_index=k, violation_time=float(trace.times[k]))
    return Verdict(Outcome.UnsafeObserved, formula, evidence)


def _envelope_for(policy: Policy):
    def envelope(lo: np.ndarray, hi: np.ndarray):
        lo_d = {name: lo[:, i] for i, name in enumerate(FORMAL_STATE)}
        hi_d = {name: hi[:, i] for i, name in enumerate(FORMAL_STATE)}
        a_lo, a_hi = policy.envelope(lo_d, hi_d)
        return a_lo.reshape(-1, 1), a_hi.reshape(-1, 1)

    return envelope


def verify_a_priori(
    cfg: EpisodeConfig,
    policy: Policy,
    formula: StlFormula,
    lookahead: float = None,
    engine: FormalEngine = None,
) -> Verdict:
    """
    Predictive verification: the episode is rolled out, and at every decision instant an Over tube of the
    policy-constrained closed loop is propagated for `lookahead` seconds from the current formal state.

    Returns
    -------
    SafeVerified only if every tube avoids the collision region and the completed trace passes
    verify_a_posteriori; UnsafeObserved if the trace fails; Unknown when a tube is clipped by the grid, meets the
    collision region, or the formal state cannot be placed on the grid.

    Raises
    ------
    PolicyKindError
        For BlackBox policies.
    """
    engine = engine or FormalEngine()
    if not policy.admits_set_propagation:
        raise PolicyKindError(
            f"Policy {policy.name} is BlackBox: a priori verification needs a WhiteBox or GreyBox policy, "
            f"use verify_a_posteriori instead"
        )
    lookahead = lookahead or engine.lookahead
    trace = roll_out(cfg, policy)
    post = verify_a_posteriori(trace, formula)
    evidence = {**post.evidence, "mode": "a_priori", "lookahead": lookahead}
    if post.outcome == Outcome.UnsafeObserved:
        return Verdict(Outcome.UnsafeObserved, formula, evidence)
    if cfg.ego.model != "double_integrator":
        return Verdict(Outcome.Unknown, formula, {**evidence, "reason": "formal engine is longitudinal only"})

    geometry = engine.geometry()
    system = engine.system(cfg)
    unsafe = unsafe_set(system, geometry)
    envelope = _envelope_for(policy)
    period = n_steps(engine.decision_period, cfg.step)
    tubes = 0
    for k in range(0, len(trace), period):
        x0 = _trace_state(trace, k)
        if x0[0] >= LARGE_GAP / 2:
            continue
        t = float(trace.times[k])
        seed = StateSet.from_points(geometry, [x0])
        if seed.clipped:
            return Verdict(Outcome.Unknown, formula, {**evidence, "reason": f"formal state off the grid at t = {t}"})
        tube = closed_loop_tube(system, seed, envelope, lookahead, engine.step, include_euler=False)
        if tube.clipped:
            return Verdict(Outcome.Unknown, formula, {**evidence, "reason": f"tube clipped by the grid at t = {t}"})
        if tube.intersects(unsafe):
            reason = f"tube meets the collision region at t = {t}"
            return Verdict(Outcome.Unknown, formula, {**evidence, "reason": reason})
        tubes += 1
    log(f"A priori verification of {policy.name}: {tubes} tubes clear")
    return Verdict(Outcome.SafeVerified, formula, {**evidence, "tubes": tubes})


def is_reducible(formula: StlFormula) -> bool:
    """Whether the formula reduces to avoiding the collision region: G[0, T] collision_free and conjunctions thereof."""
    if isinstance(formula, And):
        return is_reducible(formula.left) and is_reducible(formula.right)
    return (
        isinstance(formula, Always)
        and formula.interval.lo == 0
        and isinstance(formula.arg, Atom)
        and formula.arg.predicate.name == "collision_free"
    )


def _ics_horizon(formula: StlFormula, engine: FormalEngine) -> float:
    horizon = min(formula.horizon(), engine.ics_horizon)
    count = math.floor(horizon / engine.step + 1e-9)
    return count * engine.step


def _analysis(cfg: EpisodeConfig, formula: StlFormula, engine: FormalEngine):
    system = engine.system(cfg)
    geometry = engine.geometry()
    horizon = _ics_horizon(formula, engine)
    if horizon <= 0:
        return None
    unsafe = unsafe_set(system, geometry)
    return ics_analysis(system, unsafe, horizon, engine.step, engine.input_splits, engine.input_samples)


def _status_to_feasibility(status: IcsStatus) -> Feasibility:
    return {
        IcsStatus.Inevitable: Feasibility.SafetyInfeasible,
        IcsStatus.Avoidable: Feasibility.Feasible,
        IcsStatus.BoundaryUnknown: Feasibility.Unknown,
    }[status]


def classify_feasibility(cfg: EpisodeConfig, formula: StlFormula, engine: FormalEngine = None) -> FeasibilityResult:
    """
    Whether any admissible control can satisfy the formula from the scenario's initial state. Depends on the
    episode, the formula and the dynamics bounds only, never on a policy.

    Returns
    -------
    SafetyInfeasible when the initial state is an inevitable collision state, Feasible when it has a certified
    evasion, Unknown on grid boundary cells or for formulas that do not reduce to collision avoidance.
    """
    engine = engine or FormalEngine()
    if not is_reducible(formula):
        return FeasibilityResult(Feasibility.Unknown, reason=f"formula {to_text(formula)} is not reducible")
    if cfg.ego.model != "double_integrator":
        return FeasibilityResult(Feasibility.Unknown, reason="formal engine is longitudinal only")
    if lead_agent_index(cfg) is None:
        return FeasibilityResult(Feasibility.Feasible, reason="no vehicle ahead in the ego lane")
    x0 = formal_state(initial_channels(cfg))
    geometry = engine.geometry()
    if not geometry.cell_of(x0)[1][0]:
        return FeasibilityResult(Feasibility.Unknown, reason=f"initial state {x0} off the engine grid", state=tuple(x0))
    analysis = _analysis(cfg, formula, engine)
    if analysis is None:
        return FeasibilityResult(Feasibility.Unknown, reason="formula horizon shorter than one engine step")
    status = analysis.status(x0)
    return FeasibilityResult(_status_to_feasibility(status), status, f"initial state {status.value}", tuple(x0))


def determine_liability(
    trace: Signal,
    formula: StlFormula,
    feasibility: Feasibility | FeasibilityResult,
    fallback_engaged: bool,
) -> LiabilityFinding:
    """
    Liability rule table.

    Parameters
    ----------
    trace: Signal
        Episode under review.
    formula: StlFormula
        Safety formula.
    feasibility: Feasibility | FeasibilityResult
        Feasibility at the violation onset.
    fallback_engaged: bool
        Whether the premeditated emergency strategy was engaged.

    Returns
    -------
    NoViolation when the trace satisfies the formula; otherwise SpecViolatedAvoidable (Feasible),
    UnavoidableWithFallback / UnavoidableNoFallback (SafetyInfeasible) or FindingWithheld (Unknown).
    """
    reason = ""
    if isinstance(feasibility, FeasibilityResult):
        reason = feasibility.reason
        feasibility = feasibility.status
    feasibility = check_enum(feasibility, Feasibility, "feasibility")
    verdict = verify_a_posteriori(trace, formula)
    if verdict.outcome == Outcome.SafeVerified:
        return LiabilityFinding(False, LiabilityRationale.NoViolation, "specification satisfied")
    evidence = {"violation_index": verdict.evidence["violation_index"], "feasibility": feasibility.value}
    if feasibility == Feasibility.Feasible:
        rationale = LiabilityRationale.SpecViolatedAvoidable
        reason = "violation was avoidable"
    elif feasibility == Feasibility.SafetyInfeasible:
        if fallback_engaged:
            rationale = LiabilityRationale.UnavoidableWithFallback
            reason = "unavoidable violation, emergency strategy engaged"
        else:
            rationale = LiabilityRationale.UnavoidableNoFallback
            reason = "unavoidable violation, emergency strategy not engaged"
    else:
        rationale = LiabilityRationale.FindingWithheld
        reason = f"feasibility unknown: {reason}" if reason else "feasibility unknown"
    return LiabilityFinding(rationale.at_fault, rationale, reason, evidence)


def assess_liability(
    cfg: EpisodeConfig,
    policy: Policy,
    formula: StlFormula,
    engine: FormalEngine = None,
) -> LiabilityFinding:
    """
    Full liability pipeline: roll out, find the first violation, scan the episode backward from it for decisive
    inevitable collision states, read the fallback flag.

    The latest decisive state at or before the violation decides. Avoidable makes the violation avoidable. Inevitable
    makes it unavoidable, and the fallback counts as engaged when the flag was raised anywhere between the start of
    the last unbroken run of inevitable samples and the violation. An avoidable start that drifts into an inevitable
    collision state is therefore judged from the inevitable state.
    """
    engine = engine or FormalEngine()
    trace = roll_out(cfg, policy)
    verdict = verify_a_posteriori(trace, formula)
    if verdict.outcome == Outcome.SafeVerified:
        return determine_liability(trace, formula, Feasibility.Feasible, False)
    if not is_reducible(formula) or cfg.ego.model != "double_integrator":
        result = FeasibilityResult(Feasibility.Unknown, reason="formula or ego model outside the formal engine")
        return determine_liability(trace, formula, result, False)

    violation = verdict.evidence["violation_index"]
    analysis = _analysis(cfg, formula, engine)
    geometry = engine.geometry()
    period = n_steps(engine.decision_period, cfg.step)
    statuses = {}
    for k in range(violation, -1, -1):
        if (violation - k) % period and k != 0:
            continue
        x0 = _trace_state(trace, k)
        if analysis is None or x0[0] >= LARGE_GAP / 2 or not geometry.cell_of(x0)[1][0]:
            continue
        statuses[k] = analysis.status(x0)

    decisive = sorted(k for k, s in statuses.items() if s != IcsStatus.BoundaryUnknown)
    if not decisive:
        feasibility = FeasibilityResult(Feasibility.Unknown, reason="no decisive state before the violation")
        fallback = False
    elif statuses[decisive[-1]] == IcsStatus.Avoidable:
        reason = f"evasion certified at sample {decisive[-1]}"
        feasibility = FeasibilityResult(Feasibility.Feasible, IcsStatus.Avoidable, reason)
        fallback = False
    else:
        # start of the last unbroken run of inevitable samples
        sampled = sorted(statuses)
        onset = decisive[-1]
        for k in reversed(sampled[: sampled.index(onset)]):
            if statuses[k] != IcsStatus.Inevitable:
                break
            onset = k
        reason = f"inevitable from sample {onset}"
        feasibility = FeasibilityResult(Feasibility.SafetyInfeasible, IcsStatus.Inevitable, reason)
        fallback = bool(np.any(trace.channel("fallback")[onset : violation + 1] > 0.5))
    finding = determine_liability(trace, formula, feasibility, fallback)
    finding.evidence.update(
        {"ics_samples": {str(k): s.value for k, s in sorted(statuses.items())}, "fallback_engaged": fallback}
    )
    return finding


def combine_point_outcomes(outcomes: list[Outcome]) -> Outcome:
    """
    Combine the verdicts of the check points of a cell (center, or center and corners): safe only if every point
    is safe, infeasible only if every point is infeasible, unsafe as soon as one point was observed unsafe.
    """
    if all(o == Outcome.SafeVerified for o in outcomes):
        return Outcome.SafeVerified
    if all(o == Outcome.SafetyInfeasible for o in outcomes):
        return Outcome.SafetyInfeasible
    if any(o == Outcome.UnsafeObserved for o in outcomes):
        return Outcome.UnsafeObserved
    return Outcome.Unknown


def check_policy_for_mode(policy: Policy, formal: bool):
    if formal and policy.kind == PolicyKind.BlackBox:
        raise PolicyKindError(f"Policy {policy.name} is BlackBox: formal campaigns need a WhiteBox or GreyBox policy")
