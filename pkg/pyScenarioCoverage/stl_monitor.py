"""
Sampled trajectories and the boolean monitor.

Semantics are evaluated at the sample instants of the signal: the temporal operators quantify over the samples whose
time lies in the shifted interval (a 1e-9 s tolerance snaps window bounds onto sample instants). At sample k, with
window W(k) = {j : t_j in [t_k + lo, t_k + hi]}:

- G_I phi holds iff phi holds at every j in W(k) (true on an empty window),
- F_I phi holds iff phi holds at some j in W(k) (false on an empty window),
- phi U_I psi holds iff psi holds at some j in W(k) and phi holds at every sample k <= i < j.

An empty window whose interval is bounded and starts inside the trace is "vacuous". A window reaching past the last
sample (or unbounded) is "truncated": it is evaluated over the available samples.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import SignalDomainError, VacuousWindowError
from .stl import Always, And, Atom, Eventually, Not, Or, StlFormula, Until
from .utils import LOGGER

TIME_TOLERANCE = 1e-9


class Signal:
    """
    Sampled trajectory: strictly increasing times and one state vector per time.

    Attributes
    ----------
    times: np.ndarray
        Sample instants in seconds, shape (T,).
    states: np.ndarray
        State vectors, shape (T, dim).
    names: list[str]
        Channel name of every state column.
    controls: np.ndarray | None
        Recorded controls, shape (T, m), when the signal comes from a simulation.
    metadata: dict
        Free-form information (seed, truncation, fallback flag, ...).
    """

    def __init__(
        self,
        times,
        states,
        names: list[str] = None,
        controls=None,
        control_names: list[str] = None,
        metadata: dict = None,
    ):
        times = np.array(times, dtype=float).reshape(-1)
        states = np.array(states, dtype=float)
        if states.ndim == 1:
            states = states.reshape(-1, 1)
        if times.size < 1:
            raise ValueError("A signal needs at least one sample.")
        if states.ndim != 2 or states.shape[0] != times.size:
            raise ValueError(f"Error : states must have shape ({times.size}, dim), given : {states.shape}")
        if states.shape[1] < 1:
            raise ValueError("Error : signal dimension must be positive, given : 0")
        if not np.all(np.isfinite(times)):
            raise ValueError("Error : signal times must be finite.")
        if np.any(np.diff(times) <= 0):
            raise ValueError("Error : signal times must be strictly increasing.")
        names = list(names) if names is not None else [f"x{i}" for i in range(states.shape[1])]
        if len(names) != states.shape[1] or len(set(names)) != len(names):
            raise ValueError(f"Error : one unique name per state column needed, given : {names}")

        times.setflags(write=False)
        states.setflags(write=False)
        self.times = times
        self.states = states
        self.names = names
        self._index = {name: i for i, name in enumerate(names)}
        if controls is not None:
            controls = np.array(controls, dtype=float)
            if controls.ndim == 1:
                controls = controls.reshape(-1, 1)
            controls.setflags(write=False)
        self.controls = controls
        self.control_names = list(control_names) if control_names is not None else None
        self.metadata = dict(metadata) if metadata else {}

    def __len__(self):
        return self.times.size

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.states[:, self._index[name]]
        except KeyError:
            raise ValueError(f"Signal has no channel '{name}', available : {self.names}") from None

    def sample_index(self, t: float) -> int:
        """
        Index of the sample at time t.
        """
        if t < self.times[0] - TIME_TOLERANCE or t > self.times[-1] + TIME_TOLERANCE:
            raise SignalDomainError(f"Time {t} outside the signal domain [{self.times[0]}, {self.times[-1]}]")
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > TIME_TOLERANCE:
            raise SignalDomainError(f"Time {t} is not a sample instant of the signal")
        return k

    def to_csv(self, path: str):
        """
        Write the signal as CSV: a time column, one column per state channel, then the control columns.
        """
        header = ["time"] + self.names
        columns = [self.times.reshape(-1, 1), self.states]
        if self.controls is not None:
            header += self.control_names or [f"u{i}" for i in range(self.controls.shape[1])]
            columns.append(self.controls)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in np.hstack(columns):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str, control_names: list[str] = None) -> "Signal":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        header, data = rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
        control_names = control_names or []
        state_cols = [i for i, name in enumerate(header[1:], start=1) if name not in control_names]
        control_cols = [header.index(name) for name in control_names]
        return cls(
            data[:, 0],
            data[:, state_cols],
            names=[header[i] for i in state_cols],
            controls=data[:, control_cols] if control_cols else None,
            control_names=control_names or None,
        )


@dataclass
class MonitorResult:
    """
    Outcome of a monitor run.

    Attributes
    ----------
    values: np.ndarray
        Boolean verdict of the formula at every sample.
    vacuous: bool
        An empty bounded window inside the trace was met.
    truncated: bool
        A window reached past the end of the trace.
    vacuous_times: list[float]
        Evaluation instants that met a vacuous window.
    """

    values: np.ndarray
    vacuous: bool = False
    truncated: bool = False
    vacuous_times: list = field(default_factory=list)


def _windows(times: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """[start, end) sample index range of the window [t_k + lo, t_k + hi] for every k."""
    start = np.searchsorted(times, times + lo - TIME_TOLERANCE, side="left")
    if np.isinf(hi):
        end = np.full(times.size, times.size)
    else:
        end = np.searchsorted(times, times + hi + TIME_TOLERANCE, side="right")
    return start, np.maximum(end, start)


def _prefix(mask: np.ndarray) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(mask, dtype=np.int64)))


def _spread(needed: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    """Samples covered by the windows of the needed instants."""
    marks = np.zeros(needed.size + 1, dtype=np.int64)
    np.add.at(marks, start[needed], 1)
    np.add.at(marks, end[needed], -1)
    return np.cumsum(marks[:-1]) > 0


def _next_false(mask: np.ndarray) -> np.ndarray:
    """For every k, the first index >= k where mask is False (len(mask) if none)."""
    n = mask.size
    idx = np.where(~mask, np.arange(n), n)
    return np.minimum.accumulate(idx[::-1])[::-1]


class StlMonitor:
    """
    Evaluates one formula over signals.

    Parameters
    ----------
    formula: StlFormula
        Formula to monitor.
    strict: bool
        If True, a vacuous window raises VacuousWindowError instead of being flagged.
    """

    def __init__(self, formula: StlFormula, strict: bool = False):
        if not isinstance(formula, StlFormula):
            raise TypeError("formula must be an StlFormula")
        self.formula = formula
        self.strict = strict

    def evaluate(self, signal: Signal, needed: np.ndarray = None) -> MonitorResult:
        """
        Evaluate the formula at every sample. Flags are only raised for windows that matter to the `needed`
        evaluation instants (all samples by default).
        """
        if needed is None:
            needed = np.ones(len(signal), dtype=bool)
        result = MonitorResult(values=np.zeros(len(signal), dtype=bool))
        result.values = self._eval(self.formula, signal, needed, result)
        if result.vacuous:
            LOGGER.warning(f"Vacuous window while monitoring {self.formula} at t = {result.vacuous_times[:5]}")
        if result.truncated:
            LOGGER.debug(f"Window past the trace end while monitoring {self.formula}")
        return result

    def _eval(self, node: StlFormula, signal: Signal, needed: np.ndarray, result: MonitorResult) -> np.ndarray:
        times = signal.times
        if isinstance(node, Atom):
            mu = np.asarray(node.predicate.evaluator(signal, *node.predicate.full_args()), dtype=float)
            if mu.shape != times.shape or not np.all(np.isfinite(mu)):
                raise ValueError(f"Predicate {node.predicate.name} must return one finite value per sample")
            return mu >= 0
        if isinstance(node, Not):
            return ~self._eval(node.arg, signal, needed, result)
        if isinstance(node, And):
            return self._eval(node.left, signal, needed, result) & self._eval(node.right, signal, needed, result)
        if isinstance(node, Or):
            return self._eval(node.left, signal, needed, result) | self._eval(node.right, signal, needed, result)

        interval = node.interval
        start, end = _windows(times, interval.lo, interval.hi)
        self._flag(signal, interval, start, end, needed, result)
        if isinstance(node, Until):
            child_needed = _spread(needed, np.arange(times.size), end)
            left = self._eval(node.left, signal, child_needed, result)
            right = self._eval(node.right, signal, child_needed, result)
            stop = np.minimum(end, _next_false(left) + 1)
            hits = _prefix(right)
            return (stop > start) & (hits[np.maximum(stop, start)] - hits[start] > 0)

        child = self._eval(node.arg, signal, _spread(needed, start, end), result)
        if isinstance(node, Always):
            failures = _prefix(~child)
            return failures[end] - failures[start] == 0
        if isinstance(node, Eventually):
            hits = _prefix(child)
            return hits[end] - hits[start] > 0
        raise TypeError(f"Unknown formula node {type(node).__name__}")

    def _flag(self, signal, interval, start, end, needed, result):
        times = signal.times
        truncated = needed & ((times + interval.hi) > times[-1] + TIME_TOLERANCE)
        if truncated.any():
            result.truncated = True
        in_domain = times + interval.lo <= times[-1] + TIME_TOLERANCE
        vacuous = needed & in_domain & (start >= end) & interval.bounded
        if vacuous.any():
            if self.strict:
                k = int(np.argmax(vacuous))
                raise VacuousWindowError(f"No sample in window {interval} shifted by t = {times[k]}")
            result.vacuous = True
            result.vacuous_times.extend(float(t) for t in times[vacuous])

    def satisfies(self, signal: Signal, t: float) -> bool:
        k = signal.sample_index(t)
        needed = np.zeros(len(signal), dtype=bool)
        needed[k] = True
        return bool(self.evaluate(signal, needed).values[k])

    def monitor_trace(self, signal: Signal) -> np.ndarray:
        return self.evaluate(signal).values


def satisfies(signal: Signal, t: float, formula: StlFormula, strict: bool = False) -> bool:
    """
    Whether the signal satisfies the formula at time t.

    Parameters
    ----------
    signal: Signal
        Sampled trajectory.
    t: float
        Evaluation instant; must be one of the sample instants.
    formula: StlFormula
        Formula to check.
    strict: bool
        Raise VacuousWindowError on empty bounded windows instead of flagging them.

    Returns
    -------
    The boolean verdict.
    """
    return StlMonitor(formula, strict).satisfies(signal, t)


def monitor_trace(signal: Signal, formula: StlFormula, strict: bool = False) -> np.ndarray:
    """
    Verdict of the formula at every sample instant; element k equals satisfies(signal, times[k], formula).
    """
    return StlMonitor(formula, strict).monitor_trace(signal)


def monitor_report(signal: Signal, formula: StlFormula, strict: bool = False) -> MonitorResult:
    return StlMonitor(formula, strict).evaluate(signal)
