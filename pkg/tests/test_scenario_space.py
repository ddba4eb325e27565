import math
from fractions import Fraction

import numpy as np
import pytest

from pyScenarioCoverage import (
    ContinuousParam,
    DiscreteParam,
    Resolution,
    Scenario,
    ScenarioSpace,
    coverage_ratio,
    enumerate_cells,
    is_full_coverage,
    required_samples,
    sample_cells,
    space_volume,
    threshold_ratio,
    unit_volume,
)


def _space(ranges, discrete=()):
    continuous = tuple(ContinuousParam(f"p{i}", lo, up) for i, (lo, up) in enumerate(ranges))
    labels = tuple(DiscreteParam(f"q{i}", tuple(values)) for i, values in enumerate(discrete))
    return ScenarioSpace("odd", continuous, labels)


@pytest.mark.parametrize(
    "ranges, discrete, volume",
    [
        ([(0, 1)], (), 1.0),
        ([(0, 10), (-2, 2)], (["day", "night"],), 80.0),
        ([], (["A", "B"], ["X", "Y", "Z"]), 6.0),
    ],
)
def test_space_volume(ranges, discrete, volume):
    assert space_volume(_space(ranges, discrete)) == volume


def test_space_volume_random():
    """
    Random four-parameter spaces against a direct product.
    """
    rng = np.random.default_rng(0)
    for _ in range(50):
        lower = rng.uniform(-10, 10, 4)
        width = rng.uniform(0.1, 5, 4)
        space = _space(list(zip(lower, lower + width)))
        expected = math.prod(float(Fraction(up) - Fraction(lo)) for lo, up in zip(lower, lower + width))
        assert space_volume(space) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize(
    "ranges, half_widths, volume",
    [
        ([(0, 4)], (0.5,), 1.0),
        ([(0, 4), (0, 4)], (1, 0.25), 1.0),
    ],
)
def test_unit_volume(ranges, half_widths, volume):
    assert unit_volume(_space(ranges), Resolution(half_widths)) == volume


def test_unit_volume_whole_space():
    """
    With w_i equal to half the range, one unit times the label combinations is the whole space.
    """
    space = _space([(0, 3), (-1, 1)], (["A", "B", "C"],))
    res = Resolution((1.5, 1.0))
    assert unit_volume(space, res) * space.n_combinations == space_volume(space)


@pytest.mark.parametrize(
    "discrete, n",
    [
        ((["A"],), 5),
        ((["A", "B", "C"],), 15),
    ],
)
def test_required_samples(discrete, n):
    assert required_samples(_space([(0, 10)], discrete), Resolution((1,))) == n


def test_required_samples_cover_space():
    rng = np.random.default_rng(1)
    for _ in range(500):
        dim = int(rng.integers(1, 4))
        lower = rng.uniform(-5, 5, dim)
        width = rng.uniform(0.5, 5, dim)
        space = _space(list(zip(lower, lower + width)))
        res = Resolution(tuple(rng.uniform(0.05, 0.5, dim) * width))
        n = required_samples(space, res)
        assert n * unit_volume(space, res) >= space_volume(space) * (1 - 1e-12)


@pytest.mark.parametrize(
    "upper, centers",
    [
        (4, [1.0, 3.0]),
        (5, [1.0, 3.0, 4.0]),
    ],
)
def test_enumerate_cells_centers(upper, centers):
    cells = enumerate_cells(_space([(0, upper)]), Resolution((1,)))
    assert [c.center.continuous_values[0] for c in cells] == centers
    assert sum(c.exact_volume for c in cells) == upper
    assert cells[-1].upper == (upper,)
    assert cells[0].lower == (0.0,)


def test_enumerate_cells_discrete_only():
    cells = enumerate_cells(_space([], (["A", "B"], ["X", "Y"])), Resolution(()))
    assert len(cells) == 4
    assert [c.center.discrete_values for c in cells] == [("A", "X"), ("A", "Y"), ("B", "X"), ("B", "Y")]


def test_enumerate_cells_tile_exactly():
    """
    Owned parts of the cells sum to the space volume, for random spaces and resolutions.
    """
    rng = np.random.default_rng(2)
    for _ in range(500):
        dim = int(rng.integers(1, 3))
        lower = np.round(rng.uniform(-5, 5, dim), 3)
        width = np.round(rng.uniform(0.5, 3, dim), 3)
        space = _space(list(zip(lower, lower + width)), (["a", "b"],) if rng.random() < 0.5 else ())
        res = Resolution(tuple(np.round(rng.uniform(0.1, 0.45, dim) * width, 3)))
        cells = enumerate_cells(space, res)
        assert sum(c.exact_volume for c in cells) == space.exact_volume
        assert len({c.index for c in cells}) == len(cells)
        for cell in cells:
            assert space.contains(cell.center)


@pytest.mark.parametrize("corners, n_points", [(False, 1), (True, 5)])
def test_check_points(corners, n_points):
    cells = enumerate_cells(_space([(0, 4), (0, 2)]), Resolution((1, 1)))
    points = cells[0].check_points(corners=corners)
    assert len(points) == n_points
    assert points[0] == cells[0].center


def test_scenario_parameters():
    space = _space([(0, 10)], (["day", "night"],))
    params = space.scenario_parameters(Scenario((2.5,), ("night",)))
    assert params == {"p0": 2.5, "q0": "night"}
    with pytest.raises(ValueError, match="scenario outside the scenario space"):
        space.scenario_parameters(Scenario((12.0,), ("night",)))


@pytest.mark.parametrize(
    "verified, ratio",
    [
        (5.0, 0.5),
        (0.0, 0.0),
        (10.0, 1.0),
    ],
)
def test_coverage_ratio(verified, ratio):
    space = _space([(0, 10)])
    assert coverage_ratio(verified, space) == ratio
    assert is_full_coverage(verified, space) == (ratio == 1.0)


def test_coverage_ratio_of_cells():
    space = _space([(0, 10)])
    res = Resolution((0.5,))
    cells = enumerate_cells(space, res)
    verified = sum(c.volume for c in cells[:3])
    assert coverage_ratio(verified, space) == pytest.approx(3 * unit_volume(space, res) / space_volume(space))


@pytest.mark.parametrize("n_sv, n, ratio", [(5, 10, 0.5), (0, 7, 0.0), (7, 7, 1.0)])
def test_threshold_ratio(n_sv, n, ratio):
    assert threshold_ratio(n_sv, n) == ratio


def test_threshold_ratio_errors():
    with pytest.raises(ValueError, match="safe verified count"):
        threshold_ratio(11, 10)
    with pytest.raises(ValueError, match="required test count"):
        threshold_ratio(0, 0)


def test_sample_cells_deterministic():
    cells = enumerate_cells(_space([(0, 10)]), Resolution((0.5,)))
    first = sample_cells(cells, 0.25, seed=4)
    assert len(first) == 5
    assert first == sample_cells(cells, 0.25, seed=4)
    assert [c.index for c in first] == sorted(c.index for c in first)


def test_space_errors():
    with pytest.raises(ValueError, match="needs lower < upper"):
        ContinuousParam("d", 3, 3)
    with pytest.raises(ValueError, match="needs at least one value"):
        DiscreteParam("light", ())
    with pytest.raises(ValueError, match="names must be unique"):
        ScenarioSpace("odd", (ContinuousParam("d", 0, 1),), (DiscreteParam("d", ("a",)),))
    with pytest.raises(ValueError, match="at least one continuous or discrete parameter"):
        ScenarioSpace("odd")
    with pytest.raises(ValueError, match="must not exceed the range"):
        Resolution((3,)).check_against(_space([(0, 4)]))
    with pytest.raises(ValueError, match="half widths"):
        Resolution((1, 1)).check_against(_space([(0, 4)]))
