"""
Signal temporal logic formulas: time intervals, the formula tree and the library of named predicates the atoms
refer to. Parsing lives in stl_parser.py, evaluation in stl_monitor.py.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IntervalError, UnknownPredicateError


@dataclass(frozen=True)
class TimeInterval:
    """
    Closed time interval [lo, hi] in seconds, hi may be math.inf. The default is [0, inf).
    """

    lo: float = 0.0
    hi: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not math.isfinite(self.lo):
            raise IntervalError(f"Interval lower bound must be finite, given : {self.lo}")
        if math.isnan(self.hi) or self.hi < self.lo:
            raise IntervalError(f"Interval needs lo <= hi, given : [{self.lo}, {self.hi}]")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.hi)

    def shift(self, t: float) -> "TimeInterval":
        return shift_interval(self, t)

    def __str__(self):
        hi = "inf" if math.isinf(self.hi) else repr(self.hi)
        return f"[{self.lo!r},{hi}]"


def shift_interval(interval: TimeInterval, t: float) -> TimeInterval:
    """
    Translate an interval by t, I + t = [lo + t, hi + t]. An infinite upper bound stays infinite.
    """
    return TimeInterval(interval.lo + t, interval.hi + t)


def _check_temporal_interval(interval: TimeInterval):
    if interval.lo < 0:
        raise IntervalError(f"Interval lower bound must be >= 0, given : {interval.lo}")


class StlFormula:
    """
    Base class of the formula tree. Nodes are frozen dataclasses, so structural equality is ==.
    """

    def children(self) -> tuple["StlFormula", ...]:
        return ()

    def horizon(self) -> float:
        """
        Time span after the evaluation instant that the formula looks at.
        """
        return max((c.horizon() for c in self.children()), default=0.0)

    def atoms(self) -> list["Predicate"]:
        found = []
        for child in self.children():
            found.extend(child.atoms())
        return found

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children()), default=0)

    def __str__(self):
        from .stl_parser import to_text

        return to_text(self)


@dataclass(frozen=True)
class Predicate:
    """
    Reference to a registered predicate, with its arguments. The atom is true where evaluator(signal, *args) >= 0.
    """

    name: str
    args: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(float(a) for a in self.args))
        definition = get_predicate(self.name)
        definition.check_args(self.args)

    @property
    def evaluator(self) -> Callable:
        return get_predicate(self.name).evaluator

    def full_args(self) -> tuple[float, ...]:
        return get_predicate(self.name).complete_args(self.args)


@dataclass(frozen=True)
class Atom(StlFormula):
    predicate: Predicate

    def horizon(self) -> float:
        return 0.0

    def atoms(self) -> list[Predicate]:
        return [self.predicate]


@dataclass(frozen=True)
class Not(StlFormula):
    arg: StlFormula

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class And(StlFormula):
    left: StlFormula
    right: StlFormula

    def children(self):
        return self.left, self.right


@dataclass(frozen=True)
class Or(StlFormula):
    left: StlFormula
    right: StlFormula

    def children(self):
        return self.left, self.right


@dataclass(frozen=True)
class Always(StlFormula):
    interval: TimeInterval
    arg: StlFormula

    def __post_init__(self):
        _check_temporal_interval(self.interval)

    def children(self):
        return (self.arg,)

    def horizon(self) -> float:
        return self.interval.hi + self.arg.horizon()


@dataclass(frozen=True)
class Eventually(StlFormula):
    interval: TimeInterval
    arg: StlFormula

    def __post_init__(self):
        _check_temporal_interval(self.interval)

    def children(self):
        return (self.arg,)

    def horizon(self) -> float:
        return self.interval.hi + self.arg.horizon()


@dataclass(frozen=True)
class Until(StlFormula):
    interval: TimeInterval
    left: StlFormula
    right: StlFormula

    def __post_init__(self):
        _check_temporal_interval(self.interval)

    def children(self):
        return self.left, self.right

    def horizon(self) -> float:
        return self.interval.hi + max(self.left.horizon(), self.right.horizon())


@dataclass(frozen=True)
class PredicateDefinition:
    """
    A registered predicate.

    Attributes
    ----------
    name: str
        Identifier used in formulas.
    evaluator: Callable
        evaluator(signal, *args) -> array of mu values, one per sample.
    n_args: int
        Maximum number of arguments.
    defaults: tuple[float, ...]
        Defaults of the trailing arguments.
    description: str
        One line shown in the docs.
    """

    name: str
    evaluator: Callable
    n_args: int = 0
    defaults: tuple[float, ...] = ()
    description: str = ""

    def check_args(self, args: tuple):
        required = self.n_args - len(self.defaults)
        if len(args) < required or len(args) > self.n_args:
            raise ValueError(
                f"Error : predicate {self.name} takes {required} to {self.n_args} arguments, given : {len(args)}"
            )
        if any(not math.isfinite(a) for a in args):
            raise ValueError(f"Error : predicate {self.name} arguments must be finite, given : {args}")

    def complete_args(self, args: tuple) -> tuple:
        missing = self.n_args - len(args)
        return tuple(args) + tuple(self.defaults[len(self.defaults) - missing :]) if missing else tuple(args)


_PREDICATES: dict[str, PredicateDefinition] = {}


def register_predicate(
    name: str, evaluator: Callable, n_args: int = 0, defaults: tuple = (), description: str = ""
) -> PredicateDefinition:
    """
    Add a predicate to the library. Registering an existing name replaces it.

    Parameters
    ----------
    name: str
        Identifier used in formulas.
    evaluator: Callable
        evaluator(signal, *args) returning one real per sample; the atom holds where the value is >= 0.
    n_args: int
        Maximum number of arguments.
    defaults: tuple
        Defaults of the trailing arguments.
    description: str
        Short description.

    Returns
    -------
    The registered definition.
    """
    if not isinstance(name, str) or not name.isidentifier():
        raise ValueError(f"Error : predicate name must be an identifier, given : {name!r}")
    if len(defaults) > n_args:
        raise ValueError(f"Error : predicate {name} has more defaults than arguments")
    definition = PredicateDefinition(name, evaluator, n_args, tuple(float(d) for d in defaults), description)
    _PREDICATES[name] = definition
    return definition


def get_predicate(name: str) -> PredicateDefinition:
    try:
        return _PREDICATES[name]
    except KeyError:
        raise UnknownPredicateError(f"Unknown predicate '{name}'") from None


def is_predicate(name: str) -> bool:
    return name in _PREDICATES


def predicate_names() -> list[str]:
    return sorted(_PREDICATES)


def _constant(signal, value: float) -> np.ndarray:
    return np.full(len(signal.times), value)


def _channel_or_zero(signal, name: str) -> np.ndarray:
    return signal.channel(name) if name in signal.names else np.zeros(len(signal.times))


register_predicate("true", lambda s: _constant(s, 1.0), description="Always holds.")
register_predicate("false", lambda s: _constant(s, -1.0), description="Never holds.")
register_predicate(
    "collision_free",
    lambda s: s.channel("clearance"),
    description="Minimum footprint clearance to every agent is >= 0.",
)
register_predicate("in_road", lambda s: s.channel("road_margin"), description="Ego footprint inside the road.")
register_predicate(
    "safe",
    lambda s: np.minimum(s.channel("clearance"), s.channel("road_margin")),
    description="Collision free and inside the road boundaries.",
)
register_predicate(
    "in_lane",
    lambda s, half_width: half_width - np.abs(_channel_or_zero(s, "lane_offset")),
    n_args=1,
    defaults=(1.75,),
    description="Lateral offset to the lane center within half_width.",
)
register_predicate(
    "speed_below",
    lambda s, v_max: v_max - s.channel("ego_v"),
    n_args=1,
    description="Ego speed <= v_max.",
)
register_predicate(
    "lane_return",
    lambda s, y_tol, heading_tol: np.minimum(
        y_tol - np.abs(_channel_or_zero(s, "lane_offset")), heading_tol - np.abs(_channel_or_zero(s, "ego_heading"))
    ),
    n_args=2,
    defaults=(0.5, 0.1),
    description="Back near the lane center with a small heading (lateral offset and heading envelope).",
)
register_predicate(
    "overtake_done",
    lambda s, margin: s.channel("pass_margin") - margin,
    n_args=1,
    defaults=(0.0,),
    description="Ego rear bumper ahead of the overtaken agent's front bumper by margin.",
)
register_predicate(
    "stay_behind",
    lambda s, min_gap: s.channel("follow_gap") - min_gap,
    n_args=1,
    defaults=(0.0,),
    description="Ego front bumper behind the rear bumper of the agent ahead in the lane by min_gap.",
)
