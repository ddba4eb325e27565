from enum import Enum


class Outcome(Enum):
    SafeVerified = "SafeVerified"
    UnsafeObserved = "UnsafeObserved"
    SafetyInfeasible = "SafetyInfeasible"
    Unknown = "Unknown"
    Unverified = "Unverified"


class Approximation(Enum):
    Over = "Over"
    Under = "Under"
    Exact = "Exact"
    Heuristic = "Heuristic"


class Direction(Enum):
    Forward = "Forward"
    Backward = "Backward"


class QuantifierU(Enum):
    Exists = "Exists"
    ForAll = "ForAll"


class QuantifierD(Enum):
    NONE = "None"
    ForAll = "ForAll"


class ReachMode(Enum):
    SetAtTime = "SetAtTime"
    Tube = "Tube"


class SpecKind(Enum):
    """
    Named reachable set kinds. Each member carries the (direction, quantifier_u, quantifier_d, mode) tuple
    that reproduces it through reach().
    """

    MaxFRS = ("maxfrs", Direction.Forward, QuantifierU.Exists, QuantifierD.NONE, ReachMode.SetAtTime)
    MinBRS = ("minbrs", Direction.Backward, QuantifierU.ForAll, QuantifierD.NONE, ReachMode.SetAtTime)
    MaxBRS = ("maxbrs", Direction.Backward, QuantifierU.Exists, QuantifierD.NONE, ReachMode.SetAtTime)
    MaxFRT = ("maxfrt", Direction.Forward, QuantifierU.Exists, QuantifierD.NONE, ReachMode.Tube)
    Adversarial = ("adversarial", Direction.Forward, QuantifierU.Exists, QuantifierD.ForAll, ReachMode.SetAtTime)

    def __new__(cls, value, direction, quantifier_u, quantifier_d, mode):
        member = object.__new__(cls)
        member._value_ = value
        member.direction = direction
        member.quantifier_u = quantifier_u
        member.quantifier_d = quantifier_d
        member.mode = mode
        return member


class PolicyKind(Enum):
    WhiteBox = "WhiteBox"
    GreyBox = "GreyBox"
    BlackBox = "BlackBox"


class AgentBehavior(Enum):
    ConstantVelocity = "ConstantVelocity"
    BoundedAccel = "BoundedAccel"


class Feasibility(Enum):
    Feasible = "Feasible"
    SafetyInfeasible = "SafetyInfeasible"
    Unknown = "Unknown"


class IcsStatus(Enum):
    Inevitable = "Inevitable"
    Avoidable = "Avoidable"
    BoundaryUnknown = "BoundaryUnknown"


class LiabilityRationale(Enum):
    SpecViolatedAvoidable = ("SpecViolatedAvoidable", True)
    UnavoidableWithFallback = ("UnavoidableWithFallback", False)
    UnavoidableNoFallback = ("UnavoidableNoFallback", True)
    NoViolation = ("NoViolation", False)
    FindingWithheld = ("FindingWithheld", False)

    def __new__(cls, value, at_fault):
        member = object.__new__(cls)
        member._value_ = value
        member.at_fault = at_fault
        return member


class CampaignMode(Enum):
    SampleBased = "SampleBased"
    Formal = "Formal"
    Mixed = "Mixed"


class CellTesting(Enum):
    Center = "center"
    Corners = "corners"


class ExitCode(Enum):
    Success = (0, None)
    EngineError = (1, "Engine error.")
    ConfigError = (2, "Configuration error.")

    def __new__(cls, value, message):
        member = object.__new__(cls)
        member._value_ = value
        member.message = message
        return member
