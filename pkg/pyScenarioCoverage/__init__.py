from . import utils
from .enums import (
    Outcome,
    Approximation,
    Direction,
    QuantifierU,
    QuantifierD,
    ReachMode,
    SpecKind,
    PolicyKind,
    AgentBehavior,
    Feasibility,
    IcsStatus,
    LiabilityRationale,
    CampaignMode,
    CellTesting,
)
from .errors import (
    ConfigError,
    StlParseError,
    UnknownPredicateError,
    IntervalError,
    SignalDomainError,
    VacuousWindowError,
    BindingError,
    PolicyKindError,
    LedgerModeError,
    LedgerMismatchError,
    EngineError,
)
from .scenario_space import (
    ContinuousParam,
    DiscreteParam,
    Scenario,
    ScenarioSpace,
    Resolution,
    ScenarioCell,
    space_volume,
    unit_volume,
    required_samples,
    enumerate_cells,
    sample_cells,
    coverage_ratio,
    is_full_coverage,
    threshold_ratio,
)
from .stl import StlFormula, TimeInterval, Atom, Not, And, Or, Always, Eventually, Until, shift_interval
from .stl_parser import parse, to_text
from .stl_monitor import Signal, StlMonitor, satisfies, monitor_trace, monitor_report
from .grid import GridGeometry, StateSet
from .dynamics import DynamicalSystem, model_names
from .reachability import ReachSpec, reach, unsafe_backward_set, ics_check, ics_analysis, closed_loop_tube
from .policy import Policy, law_names
from .traffic_sim import EgoConfig, AgentConfig, RoadConfig, EpisodeConfig, bind, roll_out
from .verification import (
    Verdict,
    FeasibilityResult,
    LiabilityFinding,
    FormalEngine,
    verify_a_posteriori,
    verify_a_priori,
    classify_feasibility,
    determine_liability,
    assess_liability,
)
from .coverage import (
    SafetySpec,
    CoverageLedger,
    CoverageReport,
    penetration_rate,
    formal_volume,
    safe_coverage,
    coverage_report,
    run_campaign,
    evolution_report,
    run_evolution,
)
from .config import CampaignConfig, load as load_config
