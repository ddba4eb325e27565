"""
Parameterized operational design domain: continuous ranges and discrete label sets, their volume, the unit volume
of one verification sample and the tiling of the space into verification cells.

Volumes are accumulated as exact rationals (fractions.Fraction of the given floats) so that the ceiling relation
n * V_0 >= V_S and the cell accounting never depend on float rounding. They are returned as floats.
"""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .utils import check_bounds, check_finite, check_positive, checksum


def _check_identifier(name: str, what: str):
    if not isinstance(name, str) or not name.isidentifier():
        raise ValueError(f"Error : {what} name must be an identifier, given : {name!r}")


@dataclass(frozen=True)
class ContinuousParam:
    name: str
    lower: float
    upper: float

    def __post_init__(self):
        _check_identifier(self.name, "Continuous parameter")
        check_bounds(self.lower, self.upper, f"parameter {self.name}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def exact_width(self) -> Fraction:
        return Fraction(self.upper) - Fraction(self.lower)


@dataclass(frozen=True)
class DiscreteParam:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        _check_identifier(self.name, "Discrete parameter")
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) == 0:
            raise ValueError(f"Error : discrete parameter {self.name} needs at least one value, given : []")
        if any(not isinstance(v, str) or not v for v in self.values):
            raise ValueError(f"Error : discrete parameter {self.name} labels must be non-empty strings")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"Error : discrete parameter {self.name} labels must be distinct, given : {self.values}")


@dataclass(frozen=True)
class Scenario:
    continuous_values: tuple[float, ...] = ()
    discrete_values: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "continuous_values", tuple(float(v) for v in self.continuous_values))
        object.__setattr__(self, "discrete_values", tuple(self.discrete_values))


@dataclass(frozen=True)
class ScenarioSpace:
    """
    Scenario space of an ODD.

    Attributes
    ----------
    odd_name: str
        Name of the operational design domain.
    continuous: tuple[ContinuousParam, ...]
        Continuous parameters, in order.
    discrete: tuple[DiscreteParam, ...]
        Discrete parameters, in order.
    """

    odd_name: str
    continuous: tuple[ContinuousParam, ...] = ()
    discrete: tuple[DiscreteParam, ...] = ()

    def __post_init__(self):
        _check_identifier(self.odd_name, "ODD")
        object.__setattr__(self, "continuous", tuple(self.continuous))
        object.__setattr__(self, "discrete", tuple(self.discrete))
        if not self.continuous and not self.discrete:
            raise ValueError("A scenario space needs at least one continuous or discrete parameter.")
        names = [p.name for p in self.continuous] + [p.name for p in self.discrete]
        if len(set(names)) != len(names):
            raise ValueError(f"Error : parameter names must be unique within a scenario space, given : {names}")
        volume = float(self.exact_volume)
        if not math.isfinite(volume) or volume <= 0:
            raise ValueError(f"Error : scenario space volume must be positive and finite, given : {volume}")

    @property
    def n_continuous(self) -> int:
        return len(self.continuous)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.continuous] + [p.name for p in self.discrete]

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.continuous], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.continuous], dtype=float)

    @property
    def n_combinations(self) -> int:
        return math.prod(len(p.values) for p in self.discrete)

    @property
    def exact_volume(self) -> Fraction:
        return math.prod((p.exact_width for p in self.continuous), start=Fraction(1)) * self.n_combinations

    def contains(self, scenario: Scenario) -> bool:
        if len(scenario.continuous_values) != len(self.continuous):
            return False
        if len(scenario.discrete_values) != len(self.discrete):
            return False
        inside = all(p.lower <= v <= p.upper for p, v in zip(self.continuous, scenario.continuous_values))
        return inside and all(v in p.values for p, v in zip(self.discrete, scenario.discrete_values))

    def scenario_parameters(self, scenario: Scenario) -> dict:
        """
        Name the values of a scenario.

        Parameters
        ----------
        scenario: Scenario
            Scenario of this space.

        Returns
        -------
        A dict parameter name -> value (float for continuous parameters, label for discrete ones).
        """
        if not self.contains(scenario):
            raise ValueError(f"Error : scenario outside the scenario space {self.odd_name}, given : {scenario}")
        params = {p.name: v for p, v in zip(self.continuous, scenario.continuous_values)}
        params.update({p.name: v for p, v in zip(self.discrete, scenario.discrete_values)})
        return params

    def to_dict(self) -> dict:
        return {
            "odd_name": self.odd_name,
            "continuous": [{"name": p.name, "lower": p.lower, "upper": p.upper} for p in self.continuous],
            "discrete": [{"name": p.name, "values": list(p.values)} for p in self.discrete],
        }

    @property
    def hash(self) -> str:
        return checksum(self.to_dict())


@dataclass(frozen=True)
class Resolution:
    half_widths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "half_widths", tuple(float(w) for w in self.half_widths))
        for i, w in enumerate(self.half_widths):
            check_positive(w, f"half width {i}")

    def check_against(self, space: ScenarioSpace):
        """
        Checks the resolution matches the space: one half width per continuous parameter and 2 * w_i <= range_i.
        """
        if len(self.half_widths) != space.n_continuous:
            raise ValueError(
                f"Error : resolution needs {space.n_continuous} half widths, given : {len(self.half_widths)}"
            )
        for p, w in zip(space.continuous, self.half_widths):
            if 2 * Fraction(w) > p.exact_width:
                raise ValueError(f"Error : 2 * half width must not exceed the range of {p.name}, given : w = {w}")

    def to_dict(self) -> dict:
        return {"half_widths": list(self.half_widths)}


@dataclass(frozen=True)
class ScenarioCell:
    """
    One verification unit.

    `lower`/`upper` bound the cell box (center +- w, the last cell along a dimension is shifted so that its upper
    face lies on the space bound). `owned_lower`/`owned_upper` is the non-overlapping part of the box used for
    volume accounting; the owned parts of all cells tile the space exactly.
    """

    center: Scenario
    index: tuple[int, ...]
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    owned_lower: tuple[float, ...] = ()
    owned_upper: tuple[float, ...] = ()
    exact_volume: Fraction = field(default=Fraction(1), compare=False)

    @property
    def volume(self) -> float:
        return float(self.exact_volume)

    def check_points(self, corners: bool = False) -> list[Scenario]:
        """
        Points at which the cell is tested: the center, plus the 2^N box corners when corners is True.
        """
        points = [self.center]
        if corners and self.lower:
            for corner in itertools.product(*zip(self.lower, self.upper)):
                points.append(Scenario(corner, self.center.discrete_values))
        return points


def space_volume(space: ScenarioSpace) -> float:
    """
    Volume of the scenario space: product of the continuous ranges times the product of the discrete cardinalities.
    """
    return float(space.exact_volume)


def _exact_unit_volume(space: ScenarioSpace, res: Resolution) -> Fraction:
    res.check_against(space)
    return math.prod((2 * Fraction(w) for w in res.half_widths), start=Fraction(1))


def unit_volume(space: ScenarioSpace, res: Resolution) -> float:
    """
    Volume assigned to one sample, prod(2 * w_i). Discrete parameters do not enter it.
    """
    return float(_exact_unit_volume(space, res))


def required_samples(space: ScenarioSpace, res: Resolution) -> int:
    """
    Number of samples needed to cover the space, ceil(V_S / V_0).
    """
    return max(1, math.ceil(space.exact_volume / _exact_unit_volume(space, res)))


def cells_per_dimension(space: ScenarioSpace, res: Resolution) -> list[int]:
    res.check_against(space)
    return [max(1, math.ceil(p.exact_width / (2 * Fraction(w)))) for p, w in zip(space.continuous, res.half_widths)]


def _axis(param: ContinuousParam, w: float, count: int) -> list[tuple[float, float, float, float, float, Fraction]]:
    """(center, lower, upper, owned_lower, owned_upper, owned_width) for every cell along one dimension."""
    lo, up, fw = Fraction(param.lower), Fraction(param.upper), Fraction(w)
    axis = []
    for j in range(count):
        if j == count - 1:
            center = up - fw
            owned_lo, owned_up = lo + 2 * j * fw, up
        else:
            center = lo + (2 * j + 1) * fw
            owned_lo, owned_up = lo + 2 * j * fw, lo + 2 * (j + 1) * fw
        axis.append(
            (
                float(center),
                float(max(lo, center - fw)),
                float(min(up, center + fw)),
                float(owned_lo),
                float(owned_up),
                owned_up - owned_lo,
            )
        )
    return axis


def enumerate_cells(space: ScenarioSpace, res: Resolution) -> list[ScenarioCell]:
    """
    Tile the space into verification cells.

    Along dimension i the centers are lower + w, lower + 3w, ... and the last cell is centered at upper - w so that
    its upper face equals the bound. The continuous tiling is crossed with every discrete combination; the cell
    index lists the continuous positions first, then the index of each discrete label.

    Parameters
    ----------
    space: ScenarioSpace
        Space to tile.
    res: Resolution
        Half widths of the cells.

    Returns
    -------
    The cells, sorted by index.
    """
    counts = cells_per_dimension(space, res)
    axes = [_axis(p, w, k) for p, w, k in zip(space.continuous, res.half_widths, counts)]
    discrete_axes = [range(len(p.values)) for p in space.discrete]
    cells = []
    for cont_index in itertools.product(*[range(k) for k in counts]):
        entries = [axes[i][j] for i, j in enumerate(cont_index)]
        volume = math.prod((e[5] for e in entries), start=Fraction(1))
        for disc_index in itertools.product(*discrete_axes):
            labels = tuple(p.values[j] for p, j in zip(space.discrete, disc_index))
            cells.append(
                ScenarioCell(
                    center=Scenario(tuple(e[0] for e in entries), labels),
                    index=tuple(cont_index) + tuple(disc_index),
                    lower=tuple(e[1] for e in entries),
                    upper=tuple(e[2] for e in entries),
                    owned_lower=tuple(e[3] for e in entries),
                    owned_upper=tuple(e[4] for e in entries),
                    exact_volume=volume,
                )
            )
    return cells


def sample_cells(cells: list[ScenarioCell], fraction: float, seed: int = 0) -> list[ScenarioCell]:
    """
    Deterministic subset of the cells for an incomplete sampling round.

    Parameters
    ----------
    cells: list[ScenarioCell]
        Cells to draw from.
    fraction: float
        Share of the cells to keep, in (0, 1].
    seed: int
        Seed of the numpy generator.

    Returns
    -------
    The selected cells, in index order.
    """
    check_finite(fraction, "fraction")
    if fraction <= 0 or fraction > 1:
        raise ValueError(f"Error : fraction (0,1], given : {fraction}")
    n = max(1, math.ceil(fraction * len(cells)))
    picked = np.random.default_rng(seed).choice(len(cells), size=n, replace=False)
    return [cells[i] for i in sorted(picked.tolist())]


def coverage_ratio(verified_volume: float, space: ScenarioSpace) -> float:
    """
    Share of the space volume that is verified. The caller intersects the verified region with the space first.
    """
    check_finite(verified_volume, "verified volume")
    total = space_volume(space)
    if verified_volume < 0 or verified_volume > total * (1 + 1e-9):
        raise ValueError(f"Error : verified volume [0,{total}], given : {verified_volume}")
    return min(1.0, verified_volume / total)


def is_full_coverage(verified_volume: float, space: ScenarioSpace) -> bool:
    """Full coverage when the verified volume contains the whole space, partial coverage otherwise."""
    return coverage_ratio(verified_volume, space) >= 1.0 - 1e-9


def threshold_ratio(n_safe_verified: int, n_odd_required: int) -> float:
    """
    Threshold r = N_sv / N_ODD.
    """
    if n_odd_required < 1:
        raise ValueError(f"Error : required test count must be >= 1, given : {n_odd_required}")
    if n_safe_verified < 0 or n_safe_verified > n_odd_required:
        raise ValueError(f"Error : safe verified count [0,{n_odd_required}], given : {n_safe_verified}")
    return n_safe_verified / n_odd_required
