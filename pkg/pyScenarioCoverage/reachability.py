"""
Grid-based reachability: forward / backward reachable sets and tubes, closed-loop tubes for a priori verification
and the inevitable collision state (ICS) analysis.

Every step maps the box of each occupied cell through DynamicalSystem.step_box and rasterizes the image boxes back
onto the grid. Exists-quantified controls take the union over sub-boxes of U (sound: the interval enclosure covers
every control of the sub-box). ForAll-quantified controls keep a cell only when its image under the opposite flow lies
inside the previous set for every sub-box of U, so every state of the cell is forced whatever the control.
"""

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import DynamicalSystem
from .enums import Approximation, Direction, IcsStatus, QuantifierD, QuantifierU, ReachMode, SpecKind
from .grid import GridGeometry, StateSet, box_counts, rasterize, summed_area
from .utils import LOGGER, check_enum, check_finite, check_positive, log

STEP_TOLERANCE = 1e-9


def n_steps(span: float, step: float) -> int:
    """
    Number of steps of length `step` covering `span`.

    Raises
    ------
    ValueError
        If step does not divide span within rounding.
    """
    check_positive(step, "step")
    check_positive(span, "horizon length")
    n = int(round(span / step))
    if n < 1 or abs(n * step - span) > STEP_TOLERANCE * max(1.0, span):
        raise ValueError(f"Error : step must divide the horizon, given : step {step} for a span of {span}")
    return n


@dataclass(frozen=True)
class ReachSpec:
    """
    What to compute.

    Attributes
    ----------
    direction: Direction
        Forward or Backward (time-reversed flow).
    quantifier_u: QuantifierU
        Exists (maximal sets, Over) or ForAll (minimal sets, Under).
    quantifier_d: QuantifierD
        NONE (disturbances range over the whole box) or ForAll (adversarial, heuristic).
    horizon: tuple[float, float]
        [t0, t] in seconds.
    mode: ReachMode
        Set at time t, or tube over [t0, t].
    """

    direction: Direction = Direction.Forward
    quantifier_u: QuantifierU = QuantifierU.Exists
    quantifier_d: QuantifierD = QuantifierD.NONE
    horizon: tuple[float, float] = (0.0, 1.0)
    mode: ReachMode = ReachMode.SetAtTime

    def __post_init__(self):
        object.__setattr__(self, "direction", check_enum(self.direction, Direction, "direction"))
        object.__setattr__(self, "quantifier_u", check_enum(self.quantifier_u, QuantifierU, "quantifier_u"))
        object.__setattr__(self, "quantifier_d", check_enum(self.quantifier_d, QuantifierD, "quantifier_d"))
        object.__setattr__(self, "mode", check_enum(self.mode, ReachMode, "mode"))
        t0, t1 = (float(t) for t in self.horizon)
        check_finite(t0, "horizon start")
        check_finite(t1, "horizon end")
        if t1 <= t0:
            raise ValueError(f"Error : horizon must be nonempty, given : [{t0}, {t1}]")
        object.__setattr__(self, "horizon", (t0, t1))

    @classmethod
    def from_kind(cls, kind: SpecKind | str, horizon: tuple[float, float]) -> "ReachSpec":
        kind = check_enum(kind, SpecKind, "spec kind")
        return cls(kind.direction, kind.quantifier_u, kind.quantifier_d, horizon, kind.mode)

    @property
    def span(self) -> float:
        return self.horizon[1] - self.horizon[0]

    @property
    def approx(self) -> Approximation:
        if self.quantifier_d == QuantifierD.ForAll:
            return Approximation.Heuristic
        return Approximation.Over if self.quantifier_u == QuantifierU.Exists else Approximation.Under

    def check_system(self, system: DynamicalSystem):
        if self.quantifier_d == QuantifierD.ForAll and system.dim_d == 0:
            raise ValueError(f"Error : adversarial reach needs disturbances, model {system.name} has none")


def check_grid(system: DynamicalSystem, geometry: GridGeometry):
    if geometry.dim != system.dim_x:
        raise ValueError(f"Error : grid has {geometry.dim} dimensions, model {system.name} has {system.dim_x} states")


def _cell_boxes(geometry: GridGeometry, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return geometry.cell_bounds(np.argwhere(mask))


def _all_cell_boxes(geometry: GridGeometry) -> tuple[np.ndarray, np.ndarray]:
    idx = np.indices(geometry.shape).reshape(geometry.dim, -1).T
    return geometry.cell_bounds(idx)


class _Propagator:
    """One-step image computation shared by every analysis in this module."""

    def __init__(
        self,
        system: DynamicalSystem,
        geometry: GridGeometry,
        step: float,
        backward: bool = False,
        include_euler: bool = True,
    ):
        check_grid(system, geometry)
        self.system = system
        self.geometry = geometry
        self.step = step
        self.backward = backward
        self.include_euler = include_euler

    def ranges(self, lo, hi, u_lo, u_hi, d_lo=None, d_hi=None):
        """Raw index ranges of the image boxes."""
        i_lo, i_hi = self.system.step_box(
            lo, hi, u_lo, u_hi, d_lo, d_hi, h=self.step, backward=self.backward, include_euler=self.include_euler
        )
        return self.geometry.raw_index_ranges(i_lo, i_hi)

    def adversarial_ranges(self, lo, hi, u_lo, u_hi, d_points: np.ndarray):
        """Images that hold for every sampled disturbance: intersection of the index boxes over d_points."""
        a, b = None, None
        for d in d_points:
            a_d, b_d = self.ranges(lo, hi, u_lo, u_hi, d, d)
            a = a_d if a is None else np.maximum(a, a_d)
            b = b_d if b is None else np.minimum(b, b_d)
        return a, b

    def image_mask(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, bool]:
        """Union of the inclusive index boxes [a, b] clipped to the grid; empty boxes are skipped."""
        nonempty = np.all(a <= b, axis=1)
        a_c, b_c, escaped, outside = self.geometry.clip_ranges(a[nonempty], b[nonempty])
        keep = ~outside
        return rasterize(self.geometry, a_c[keep], b_c[keep]), bool(escaped.any())

    def contained(self, table: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Whether every image box lies inside the grid and inside the set whose summed-area table is given."""
        a_c, b_c, escaped, _ = self.geometry.clip_ranges(a, b)
        volume = np.prod(b_c - a_c + 1, axis=1)
        return (box_counts(table, a_c, b_c) == volume) & ~escaped


def _step_set(
    propagator: _Propagator,
    mask: np.ndarray,
    spec: ReachSpec,
    u_boxes: list,
    d_points: np.ndarray,
) -> tuple[np.ndarray, bool]:
    geometry = propagator.geometry
    lo, hi = _cell_boxes(geometry, mask)
    if lo.shape[0] == 0:
        return np.zeros(geometry.shape, dtype=bool), False

    clipped = False
    result = np.zeros(geometry.shape, dtype=bool)
    for u_lo, u_hi in u_boxes:
        if spec.quantifier_d == QuantifierD.ForAll:
            a, b = propagator.adversarial_ranges(lo, hi, u_lo, u_hi, d_points)
        else:
            a, b = propagator.ranges(lo, hi, u_lo, u_hi)
        m, esc = propagator.image_mask(a, b)
        result |= m
        clipped |= esc
    return result, clipped


def _forced_set(reverse: _Propagator, mask: np.ndarray, u_boxes: list) -> np.ndarray:
    """
    Cells every state of which is linked to `mask` in one step under every control: the image of the cell through
    `reverse` (the flow opposite to the propagation direction) lies inside `mask` for each sub-box of U and the
    whole disturbance box. Images leaving the grid never count.
    """
    geometry = reverse.geometry
    if not mask.any():
        return np.zeros(geometry.shape, dtype=bool)
    lo, hi = _all_cell_boxes(geometry)
    table = summed_area(mask)
    joined = np.ones(geometry.n_cells, dtype=bool)
    for u_lo, u_hi in u_boxes:
        joined &= reverse.contained(table, *reverse.ranges(lo, hi, u_lo, u_hi))
    return joined.reshape(geometry.shape)


def reach_sequence(
    system: DynamicalSystem,
    seed: StateSet,
    spec: ReachSpec,
    step: float,
    input_splits: int | list[int] = 1,
    disturbance_samples: int | list[int] = 3,
    show_log: bool | str = False,
) -> list[StateSet]:
    """
    Sets at every step instant of the horizon, the seed first.

    Parameters
    ----------
    system: DynamicalSystem
        Dynamics with its control, disturbance and domain boxes.
    seed: StateSet
        Initial (Forward) or goal (Backward) set.
    spec: ReachSpec
        Direction, quantifiers, horizon and mode.
    step: float
        Time step in seconds; must divide the horizon.
    input_splits: int | list[int]
        Sub-boxes of U per control dimension. Exists controls take the union of their images, ForAll controls
        require every one of them to land inside the previous set.
    disturbance_samples: int | list[int]
        Disturbance sample points per dimension for the adversarial quantifier.
    show_log: bool | str
        If True, all logs are printed. If "Status", only status logs. If False, only warnings.

    Returns
    -------
    The list of StateSet, one per step instant (n_steps + 1 entries).
    """
    spec.check_system(system)
    if seed.is_empty:
        raise ValueError("Error : the seed set must be nonempty")
    count = n_steps(spec.span, step)
    backward = spec.direction == Direction.Backward
    propagator = _Propagator(system, seed.geometry, step, backward=backward)
    reverse = _Propagator(system, seed.geometry, step, backward=not backward)
    u_boxes = system.input_boxes(input_splits)
    d_points = system.disturbance_points(disturbance_samples)
    metadata = {"quantifier_order": "exists_u_forall_d"} if spec.quantifier_d == QuantifierD.ForAll else {}

    sets = [StateSet(seed.geometry, seed.mask.copy(), seed.approx, {"clipped": seed.clipped})]
    mask, clipped = seed.mask, seed.clipped
    for k in range(count):
        if spec.quantifier_u == QuantifierU.ForAll:
            mask, escaped = _forced_set(reverse, mask, u_boxes), False
        else:
            mask, escaped = _step_set(propagator, mask, spec, u_boxes, d_points)
        clipped |= escaped
        sets.append(StateSet(seed.geometry, mask, spec.approx, {**metadata, "clipped": clipped}))
        if show_log is True:
            log("", f"reach step {k + 1}/{count}: {int(mask.sum())} cells")
    if clipped:
        LOGGER.warning(f"Reachable set of {system.name} left the grid; the result is clipped")
    return sets


def reach(
    system: DynamicalSystem,
    seed: StateSet,
    spec: ReachSpec,
    step: float,
    input_splits: int | list[int] = 1,
    disturbance_samples: int | list[int] = 3,
    show_log: bool | str = False,
) -> StateSet:
    """
    Reachable set (SetAtTime) or tube (Tube) of a seed under the quantified inputs.

    The result is tagged Over for Exists controls, Under for ForAll controls and Heuristic for the adversarial
    quantifier (metadata["quantifier_order"] records the fixed reading). A result leaving the domain is clipped and
    metadata["clipped"] is set. See reach_sequence for the parameters.
    """
    sets = reach_sequence(system, seed, spec, step, input_splits, disturbance_samples, show_log)
    last = sets[-1]
    if spec.mode == ReachMode.SetAtTime:
        result = last
    else:
        tube = np.zeros(seed.geometry.shape, dtype=bool)
        for s in sets:
            tube |= s.mask
        result = StateSet(seed.geometry, tube, spec.approx, last.metadata)
    result.metadata["horizon"] = list(spec.horizon)
    result.metadata["step"] = step
    kind = f"{spec.direction.value} {spec.quantifier_u.value} {spec.mode.value}"
    log(f"{kind}: {result.n_cells} cells ({result.approx.value})")
    return result


def closed_loop_tube(
    system: DynamicalSystem,
    seed: StateSet,
    envelope: Callable,
    horizon: float,
    step: float,
    include_euler: bool = True,
) -> StateSet:
    """
    Over-approximate tube of the closed loop x' = f(x, pi(x), d) over [0, horizon].

    Parameters
    ----------
    system: DynamicalSystem
        Dynamics; the policy output is clipped to its control box.
    seed: StateSet
        Initial set.
    envelope: Callable
        envelope(lo, hi) -> (u_lo, u_hi): bounds of the policy output over the state boxes lo, hi of shape (k, n),
        returned with shape (k, m). It is evaluated on the box swept during the step, so it covers every state the
        held control is computed from.
    horizon: float
        Lookahead in seconds.
    step: float
        Time step; must divide the horizon.
    include_euler: bool
        Enclose the explicit Euler successors as well as the exact ones (see DynamicalSystem.step_box).

    Returns
    -------
    The Over tagged tube, seed included; metadata["clipped"] is set when it reached past the domain.
    """
    count = n_steps(horizon, step)
    geometry = seed.geometry
    propagator = _Propagator(system, geometry, step, include_euler=include_euler)
    mask, tube, clipped = seed.mask, seed.mask.copy(), seed.clipped
    for _ in range(count):
        lo, hi = _cell_boxes(geometry, mask)
        if lo.shape[0] == 0:
            break
        # states visited within the step under any admissible control
        s_lo, s_hi = system.step_box(lo, hi, system.u_box[0], system.u_box[1], h=step)
        s_lo, s_hi = np.minimum(lo, s_lo), np.maximum(hi, s_hi)
        u_lo, u_hi = envelope(s_lo, s_hi)
        u_lo = np.clip(np.broadcast_to(u_lo, (lo.shape[0], system.dim_u)), system.u_box[0], system.u_box[1])
        u_hi = np.clip(np.broadcast_to(u_hi, (lo.shape[0], system.dim_u)), system.u_box[0], system.u_box[1])
        mask, escaped = propagator.image_mask(*propagator.ranges(lo, hi, u_lo, u_hi))
        tube |= mask
        clipped |= escaped
    if clipped:
        LOGGER.warning(f"Closed-loop tube of {system.name} left the grid; the result is clipped")
    return StateSet(geometry, tube, Approximation.Over, {"clipped": clipped, "horizon": [0.0, horizon]})


def unsafe_backward_set(
    system: DynamicalSystem,
    unsafe: StateSet,
    horizon: float,
    step: float,
    input_splits: int | list[int] = 1,
    show_log: bool | str = False,
) -> StateSet:
    """
    States from which every admissible control sequence enters `unsafe` within the horizon, whatever the
    disturbance does.

    A cell joins the set when, for every control sub-box, its exact (zero-order hold) image lies inside the set
    computed so far. Images leaving the grid never count as forced. The result is tagged Under: every cell in it is a
    guaranteed inevitable collision state at the step instants.
    """
    if unsafe.is_empty:
        raise ValueError("Error : the unsafe set must be nonempty")
    count = n_steps(horizon, step)
    geometry = unsafe.geometry
    propagator = _Propagator(system, geometry, step, include_euler=False)
    u_boxes = system.input_boxes(input_splits)
    lo, hi = _all_cell_boxes(geometry)
    forced = unsafe.mask.copy()
    for k in range(count):
        table = summed_area(forced)
        joined = np.ones(geometry.n_cells, dtype=bool)
        for u_lo, u_hi in u_boxes:
            joined &= propagator.contained(table, *propagator.ranges(lo, hi, u_lo, u_hi))
        updated = forced | joined.reshape(geometry.shape)
        if show_log is True:
            log("", f"inevitable set step {k + 1}/{count}: {int(updated.sum())} cells")
        if np.array_equal(updated, forced):
            break
        forced = updated
    return StateSet(geometry, forced, Approximation.Under, {"horizon": [0.0, horizon], "step": step})


def viable_set(
    system: DynamicalSystem,
    unsafe: StateSet,
    horizon: float,
    step: float,
    input_samples: int | list[int] = 5,
    show_log: bool | str = False,
) -> StateSet:
    """
    States with a certified evasion: some sequence of sampled controls keeps every state of the cell out of
    `unsafe` at each step instant of the horizon, whatever the disturbance does.

    The complement of this set over-approximates the inevitable collision states.
    """
    count = n_steps(horizon, step)
    geometry = unsafe.geometry
    propagator = _Propagator(system, geometry, step, include_euler=False)
    u_points = system.input_points(input_samples)
    lo, hi = _all_cell_boxes(geometry)
    safe = ~unsafe.mask
    viable = safe.copy()
    for k in range(count):
        table = summed_area(viable)
        escapes = np.zeros(geometry.n_cells, dtype=bool)
        for u in u_points:
            escapes |= propagator.contained(table, *propagator.ranges(lo, hi, u, u))
        updated = viable & escapes.reshape(geometry.shape)
        if show_log is True:
            log("", f"viable set step {k + 1}/{count}: {int(updated.sum())} cells")
        if np.array_equal(updated, viable):
            break
        viable = updated
    return StateSet(geometry, viable, Approximation.Under, {"horizon": [0.0, horizon], "step": step})


@dataclass
class IcsAnalysis:
    """
    Inevitable collision state analysis of one system, unsafe set and horizon.

    Attributes
    ----------
    inevitable: StateSet
        Under tagged set of guaranteed inevitable collision states.
    viable: StateSet
        Under tagged set of states with a certified evasion.
    """

    system: DynamicalSystem
    unsafe: StateSet
    horizon: float
    step: float
    inevitable: StateSet = field(default=None, repr=False)
    viable: StateSet = field(default=None, repr=False)

    @property
    def over_ics(self) -> StateSet:
        """Over-approximation of the inevitable collision states: everything without a certified evasion."""
        return self.viable.complement()

    def status(self, x0) -> IcsStatus:
        """
        Classify one state.

        Raises
        ------
        ValueError
            If x0 lies outside the grid domain.
        """
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.size != self.unsafe.geometry.dim:
            raise ValueError(f"Error : state needs {self.unsafe.geometry.dim} coordinates, given : {x0.size}")
        idx, inside = self.unsafe.geometry.cell_of(x0)
        if not inside[0]:
            raise ValueError(f"Error : state outside the analysis domain, given : {x0.tolist()}")
        if self.inevitable.contains_cell(idx[0]):
            return IcsStatus.Inevitable
        if self.viable.contains_cell(idx[0]):
            return IcsStatus.Avoidable
        return IcsStatus.BoundaryUnknown

    def boundary(self) -> StateSet:
        """Cells the grid cannot resolve."""
        return StateSet(self.unsafe.geometry, ~self.inevitable.mask & ~self.viable.mask, Approximation.Exact)


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def ics_analysis(
    system: DynamicalSystem,
    unsafe: StateSet,
    horizon: float,
    step: float,
    input_splits: int | list[int] = 1,
    input_samples: int | list[int] = 5,
    show_log: bool | str = False,
) -> IcsAnalysis:
    """
    Compute (or fetch from the process-wide cache) the ICS analysis. Campaign workers share one analysis per
    (system, unsafe set, horizon, step, sampling) key.
    """
    key = (
        system.hash,
        unsafe.geometry,
        np.packbits(unsafe.mask).tobytes(),
        float(horizon),
        float(step),
        str(input_splits),
        str(input_samples),
    )
    with _CACHE_LOCK:
        analysis = _CACHE.get(key)
        if analysis is None:
            log(f"ICS analysis of {system.name} over {unsafe.geometry.n_cells} cells, horizon {horizon} s")
            analysis = IcsAnalysis(system, unsafe, horizon, step)
            analysis.inevitable = unsafe_backward_set(system, unsafe, horizon, step, input_splits, show_log)
            analysis.viable = viable_set(system, unsafe, horizon, step, input_samples, show_log)
            _CACHE[key] = analysis
            log(
                f"ICS analysis done: {analysis.inevitable.n_cells} inevitable, {analysis.viable.n_cells} viable, "
                f"{analysis.boundary().n_cells} boundary cells"
            )
    return analysis


def clear_ics_cache():
    with _CACHE_LOCK:
        _CACHE.clear()


def ics_check(
    system: DynamicalSystem,
    x0,
    unsafe: StateSet,
    horizon: float,
    step: float,
    input_splits: int | list[int] = 1,
    input_samples: int | list[int] = 5,
) -> IcsStatus:
    """
    Whether a state is an inevitable collision state.

    Parameters
    ----------
    system: DynamicalSystem
        Dynamics with control, disturbance and domain boxes.
    x0: list[float]
        State to classify; must lie inside the grid of `unsafe`.
    unsafe: StateSet
        Collision region.
    horizon: float
        Look-ahead in seconds.
    step: float
        Time step; must divide the horizon.

    Returns
    -------
    Inevitable if x0's cell is a guaranteed ICS, Avoidable if it has a certified evasion, BoundaryUnknown otherwise.
    """
    return ics_analysis(system, unsafe, horizon, step, input_splits, input_samples).status(x0)


def unsafe_set(system: DynamicalSystem, geometry: GridGeometry, inner: bool = False) -> StateSet:
    """
    Collision region of the model rasterized on a grid: the cells meeting the region, or only the cells lying
    entirely inside it when `inner` is True. Both agree on grids aligned with the region boundary.
    """
    check_grid(system, geometry)
    region = system.unsafe_box()
    if region is None:
        raise ValueError(f"Error : model {system.name} declares no collision region")
    lo, hi = region
    lo, hi = np.maximum(lo, geometry.lower), np.minimum(hi, geometry.upper)
    if np.any(lo >= hi):
        return StateSet.empty(geometry)
    result = StateSet.from_box(geometry, lo, hi)
    if inner:
        c_lo, c_hi = _all_cell_boxes(geometry)
        fully = np.all((c_lo >= lo - 1e-9 * geometry.widths) & (c_hi <= hi + 1e-9 * geometry.widths), axis=1)
        result.mask &= fully.reshape(geometry.shape)
    return result
