import itertools

import numpy as np
import pytest

from pyScenarioCoverage import (
    Approximation,
    DynamicalSystem,
    GridGeometry,
    IcsStatus,
    ReachSpec,
    SpecKind,
    StateSet,
    closed_loop_tube,
    ics_analysis,
    ics_check,
    reach,
    unsafe_backward_set,
)
from pyScenarioCoverage.reachability import clear_ics_cache, n_steps, reach_sequence, unsafe_set


def _integrator():
    system = DynamicalSystem("integrator_1d", [-1], [1], [-3], [3])
    return system, GridGeometry([-3], [3], [60], ["x"])


def _wall_system(wall):
    system = DynamicalSystem("double_integrator", [-5], [5], [-2, -2], [14, 20], params={"wall": wall})
    return system, GridGeometry([-2, -2], [14, 20], [160, 220], ["p", "v"])


def _monte_carlo(system, lower, upper, step, count, rng, n=2000, exact=False):
    """
    Random piecewise-constant rollouts (explicit Euler, or the exact zero-order hold for the double integrator)
    started uniformly in the box [lower, upper).
    """
    x = rng.uniform(lower, upper, (n, len(lower)))
    states = [x]
    for _ in range(count):
        u = rng.uniform(system.u_box[0], system.u_box[1], (n, system.dim_u))
        d = rng.uniform(system.d_box[0], system.d_box[1], (n, system.dim_d))
        if exact:
            p, v = x[:, 0], x[:, 1]
            x = np.stack([p + v * step + u[:, 0] * step**2 / 2, v + u[:, 0] * step], axis=-1)
        else:
            x = system.euler(x, u, d, h=step)
        states.append(x)
    return states


def test_forward_exists_integrator():
    system, geometry = _integrator()
    seed = StateSet.from_points(geometry, [[0.0]])
    result = reach(system, seed, ReachSpec.from_kind(SpecKind.MaxFRS, (0, 1)), 0.1)
    assert result.approx == Approximation.Over
    assert result.contains_points(np.linspace(-1, 1, 41)[:, None]).all()
    lo, hi = result.bounding_box()
    assert lo[0] >= -1 - 2 * geometry.widths[0] - 1e-9
    assert hi[0] <= 1 + 2 * geometry.widths[0] + 1e-9


@pytest.mark.parametrize("step", [0.1, 0.05, 0.025, 0.2])
def test_forall_from_a_point_is_empty(step):
    system, geometry = _integrator()
    seed = StateSet.from_points(geometry, [[0.0]])
    result = reach(system, seed, ReachSpec.from_kind(SpecKind.MinBRS, (0, 1)), step)
    assert result.approx == Approximation.Under
    assert result.is_empty


def _every_control_sequence(system, x, step, count, samples=3):
    """Euler end states of x under every sequence of `count` controls drawn from a regular grid over U."""
    for sequence in itertools.product(system.input_points(samples), repeat=count):
        y = x
        for u in sequence:
            y = system.euler(y, np.broadcast_to(u, (len(y), system.dim_u)), h=step)
        yield y


def _cell_samples(geometry, cells, rng, n=4):
    lo, hi = geometry.cell_bounds(cells)
    inner = rng.uniform(lo[:, None, :], hi[:, None, :], (len(cells), n, geometry.dim))
    centers = ((lo + hi) / 2)[:, None, :]
    return np.concatenate([centers, inner, lo[:, None, :]], axis=1).reshape(-1, geometry.dim)


@pytest.mark.parametrize(
    "make, target, horizon, step, cells",
    [
        (_integrator, ([-0.5], [0.5]), 0.2, 0.05, 2),
        (_integrator, ([-0.5], [0.5]), 0.3, 0.1, 4),
        (lambda: _wall_system(4.0), None, 0.5, 0.1, None),
    ],
)
def test_forall_sets_are_forced(make, target, horizon, step, cells):
    """
    Every state of a MinBRS cell ends in the target under every control sequence of an exhaustive control grid.
    """
    system, geometry = make()
    goal = unsafe_set(system, geometry) if target is None else StateSet.from_box(geometry, *target)
    result = reach(system, goal, ReachSpec.from_kind(SpecKind.MinBRS, (0, horizon)), step)
    assert result.approx == Approximation.Under
    assert not result.is_empty
    if cells is not None:
        assert result.n_cells == cells
    x = _cell_samples(geometry, result.cells, np.random.default_rng(4))
    for ends in _every_control_sequence(system, x, step, n_steps(horizon, step)):
        assert goal.contains_points(ends).all()


def test_backward_exists_integrator():
    system, geometry = _integrator()
    goal = StateSet.from_points(geometry, [[0.05]])
    result = reach(system, goal, ReachSpec.from_kind(SpecKind.MaxBRS, (0, 1)), 0.1)
    assert result.contains([-0.95])
    assert result.contains([1.0])
    assert not result.contains([-1.5])


def test_tube_holds_every_step():
    system, geometry = _integrator()
    seed = StateSet.from_points(geometry, [[0.0]])
    tube = reach(system, seed, ReachSpec.from_kind(SpecKind.MaxFRT, (0, 1)), 0.1)
    for s in reach_sequence(system, seed, ReachSpec(horizon=(0, 1)), 0.1):
        assert s.issubset(tube)
    assert tube.metadata["horizon"] == [0.0, 1.0]


def test_double_integrator_contains_rollouts():
    """
    The Over sets hold every sampled rollout, Euler and exact, at every step instant.
    """
    system = DynamicalSystem("double_integrator", [-5], [0], [-2, -1], [30, 11])
    geometry = GridGeometry([-2, -1], [30, 11], [320, 120], ["p", "v"])
    seed = StateSet.from_box(geometry, [0, 10], [0.1, 10.1])
    sets = reach_sequence(system, seed, ReachSpec(horizon=(0, 2)), 0.1)
    assert len(sets) == 21
    rng = np.random.default_rng(0)
    for exact in (False, True):
        states = _monte_carlo(system, [0, 10], [0.1, 10.1], 0.1, 20, rng, exact=exact)
        for s, x in zip(sets, states):
            assert s.contains_points(x).all()
    tube = reach(system, seed, ReachSpec.from_kind(SpecKind.MaxFRT, (0, 2)), 0.1)
    lo, hi = tube.bounding_box()
    assert lo[0] <= 0 and hi[0] >= 20
    assert hi[0] <= 23


def test_relative_model_contains_rollouts():
    system = DynamicalSystem("relative_longitudinal", [-5], [2], [0, 4, 4], [30, 16, 16], [-1], [1])
    geometry = GridGeometry([0, 4, 4], [30, 16, 16], [60, 60, 60])
    seed = StateSet.from_box(geometry, [10, 10, 9], [11, 10.4, 9.4])
    sets = reach_sequence(system, seed, ReachSpec(horizon=(0, 1)), 0.1)
    states = _monte_carlo(system, [10, 10, 9], [11, 10.4, 9.4], 0.1, 10, np.random.default_rng(1))
    for s, x in zip(sets, states):
        assert s.contains_points(x).all()


def test_bicycle_contains_rollouts():
    system = DynamicalSystem(
        "kinematic_bicycle", [-0.2, -2], [0.2, 2], [-1, -3, -1, 3], [9, 3, 1, 7.5], params={"wheelbase": 2.7}
    )
    geometry = GridGeometry([-1, -3, -1, 3], [9, 3, 1, 7.5], [40, 24, 20, 18])
    lower, upper = [0, -0.25, -0.1, 5], [0.25, 0.25, 0.1, 5.25]
    seed = StateSet.from_box(geometry, lower, upper)
    sets = reach_sequence(system, seed, ReachSpec(horizon=(0, 0.5)), 0.1)
    states = _monte_carlo(system, lower, upper, 0.1, 5, np.random.default_rng(2))
    inside = np.ones(len(states[0]), dtype=bool)
    for s, x in zip(sets, states):
        inside &= np.all((x >= geometry.lower) & (x < geometry.upper), axis=1)
        assert s.contains_points(x[inside]).all()


def test_adversarial_is_heuristic():
    system = DynamicalSystem("relative_longitudinal", [-5], [2], [0, 4, 4], [30, 16, 16], [-1], [1])
    geometry = GridGeometry([0, 4, 4], [30, 16, 16], [30, 24, 24])
    seed = StateSet.from_box(geometry, [10, 10, 9], [11, 10.5, 9.5])
    result = reach(system, seed, ReachSpec.from_kind(SpecKind.Adversarial, (0, 0.5)), 0.1)
    assert result.approx == Approximation.Heuristic
    assert result.metadata["quantifier_order"] == "exists_u_forall_d"


@pytest.mark.parametrize("wall, inside", [(8, True), (12, False)])
def test_unsafe_backward_set_wall(wall, inside):
    system, geometry = _wall_system(wall)
    result = unsafe_backward_set(system, unsafe_set(system, geometry), 2.0, 0.1, input_splits=4)
    assert result.approx == Approximation.Under
    assert result.contains([0.0, 10.0]) is inside


@pytest.mark.parametrize("wall, status", [(8, IcsStatus.Inevitable), (12, IcsStatus.Avoidable)])
def test_ics_check_wall(wall, status):
    system, geometry = _wall_system(wall)
    assert ics_check(system, [0.0, 10.0], unsafe_set(system, geometry), 2.0, 0.1, input_splits=4) == status


def test_ics_matches_braking_distance():
    """
    Ego at speed v behind a standing obstacle at distance d with |a| <= 5: the inevitable collision states are
    d < v^2 / 10. Decisive cells must agree with it; only cells near the boundary may stay unresolved.
    """
    lower, upper = [-6, -3, -0.01], [32, 26, 0.01]
    system = DynamicalSystem("relative_longitudinal", [-5], [5], lower, upper, [0.0], [0.0])
    geometry = GridGeometry(lower, upper, [760, 290, 1], ["gap", "ego_v", "lead_v"])
    analysis = ics_analysis(system, unsafe_set(system, geometry), 3.0, 0.2, input_splits=1, input_samples=5)
    for i in (30, 50, 80, 110, 140, 165):
        v = -3 + 0.1 * (i + 0.5)
        for j in range(120, 680, 7):
            d = -6 + 0.05 * (j + 0.5)
            boundary = v * v / 10
            status = analysis.status([d, v, 0.0])
            if status == IcsStatus.Inevitable:
                assert d < boundary + 1e-9, (d, v)
            elif status == IcsStatus.Avoidable:
                assert d > boundary - 0.1, (d, v)
            if abs(d - boundary) > 0.3 + 0.1 * v:
                assert status != IcsStatus.BoundaryUnknown, (d, v)
    assert analysis.inevitable.issubset(analysis.over_ics)


def test_ics_analysis_cache():
    clear_ics_cache()
    system, geometry = _wall_system(8)
    unsafe = unsafe_set(system, geometry)
    first = ics_analysis(system, unsafe, 1.0, 0.1)
    assert ics_analysis(system, unsafe, 1.0, 0.1) is first
    clear_ics_cache()
    assert ics_analysis(system, unsafe, 1.0, 0.1) is not first
    with pytest.raises(ValueError, match="outside the analysis domain"):
        first.status([20.0, 0.0])


def test_closed_loop_tube_full_brake():
    system, geometry = _wall_system(None)

    def brake(lo, hi):
        return np.full((len(lo), 1), -5.0), np.full((len(lo), 1), -5.0)

    seed = StateSet.from_points(geometry, [[0.05, 10.05]])
    tube = closed_loop_tube(system, seed, brake, 2.0, 0.1, include_euler=False)
    assert tube.approx == Approximation.Over
    assert not tube.clipped
    t = np.arange(21) * 0.1
    assert tube.contains_points(np.stack([0.05 + 10.05 * t - 2.5 * t**2, 10.05 - 5 * t], axis=-1)).all()
    for wall, meets in ((9.5, True), (11.5, False)):
        walled, _ = _wall_system(wall)
        assert tube.intersects(unsafe_set(walled, geometry)) is meets


def test_export_round_trip(tmp_path):
    system, geometry = _integrator()
    seed = StateSet.from_points(geometry, [[0.0]])
    result = reach(system, seed, ReachSpec.from_kind(SpecKind.MaxFRS, (0, 0.5)), 0.1)
    path = str(tmp_path / "frs.txt")
    result.export(path, config_hash="abc")
    back = StateSet.load(path)
    assert back == result
    assert back.approx == Approximation.Over
    assert back.metadata["step"] == 0.1


def test_set_algebra():
    geometry = GridGeometry([0, 0], [4, 4], [4, 4])
    a = StateSet.from_box(geometry, [0, 0], [2, 2])
    b = StateSet.from_box(geometry, [1, 1], [3, 3], approx=Approximation.Over)
    assert a.union(b).n_cells == 7
    assert a.intersection(b).n_cells == 1
    assert a.difference(b).n_cells == 3
    assert a.union(b).approx == Approximation.Over
    assert b.complement().approx == Approximation.Under
    assert a.refine(2).n_cells == 16
    assert StateSet.from_box(geometry, [3, 3], [6, 6]).clipped


@pytest.mark.parametrize(
    "call, message",
    [
        (lambda s, g: reach(s, StateSet.empty(g), ReachSpec(), 0.1), "seed set must be nonempty"),
        (lambda s, g: reach(s, StateSet.full(g), ReachSpec(horizon=(0, 1)), 0.3), "step must divide the horizon"),
        (lambda s, g: reach(s, StateSet.full(g), ReachSpec.from_kind("adversarial", (0, 1)), 0.1), "disturbances"),
        (lambda s, g: ReachSpec(horizon=(1, 1)), "horizon must be nonempty"),
        (lambda s, g: unsafe_set(s, g), "declares no collision region"),
        (lambda s, g: reach(s, StateSet.full(GridGeometry([0, 0], [1, 1], [2, 2])), ReachSpec(), 0.1), "dimensions"),
    ],
)
def test_reach_errors(call, message):
    system, geometry = _integrator()
    with pytest.raises(ValueError, match=message):
        call(system, geometry)


def test_n_steps():
    assert n_steps(4.5, 0.25) == 18
    assert n_steps(3.0, 0.2) == 15
