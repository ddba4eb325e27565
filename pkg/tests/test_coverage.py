import csv
import json

import pytest

from pyScenarioCoverage import (
    AgentConfig,
    BindingError,
    CampaignMode,
    ContinuousParam,
    CoverageLedger,
    CoverageReport,
    DiscreteParam,
    EgoConfig,
    EpisodeConfig,
    FormalEngine,
    LedgerMismatchError,
    LedgerModeError,
    Outcome,
    Policy,
    PolicyKindError,
    Resolution,
    SafetySpec,
    ScenarioSpace,
    coverage_report,
    evolution_report,
    formal_volume,
    penetration_rate,
    run_campaign,
    run_evolution,
    safe_coverage,
)
from pyScenarioCoverage.coverage import write_matrix_csv

SPACE = ScenarioSpace("wall", (ContinuousParam("d", 0.0, 20.0),))
RES = Resolution((0.5,))
SPEC = SafetySpec("The ego shall not collide.", "G[0,5] collision_free")
EPISODE = EpisodeConfig(
    duration=5.0,
    step=0.05,
    ego=EgoConfig(v=10.0),
    agents=(AgentConfig(gap=20.0, v=0.0, length=0.5),),
    binding={"d": "agents.0.gap"},
)


def brake():
    return Policy("brake", law="full_brake")


def idle():
    return Policy("idle", law="zero")


def opaque_brake(obs):
    return -5.0 if obs["ego_v"] > 0 else 0.0


@pytest.fixture(scope="module")
def formal_ledger():
    return run_campaign(SPACE, RES, SPEC, brake(), "Formal", EPISODE)


@pytest.fixture(scope="module")
def sample_ledger():
    return run_campaign(SPACE, RES, SPEC, brake(), "SampleBased", EPISODE)


def test_sample_based_wall(sample_ledger):
    """
    Euler braking covers 10.25 m: every cell centered below it collides, every cell above it is safe.
    """
    counts = sample_ledger.counts()
    assert counts[Outcome.UnsafeObserved] == 10
    assert counts[Outcome.SafeVerified] == 10
    assert sample_ledger.cells_with(Outcome.UnsafeObserved) == [(i,) for i in range(10)]
    assert safe_coverage(sample_ledger) == pytest.approx(0.5)
    with pytest.raises(LedgerModeError, match="Formal or Mixed"):
        penetration_rate(sample_ledger)
    assert coverage_report(sample_ledger).penetration_rate is None


def test_formal_wall(formal_ledger):
    """
    Cells below the stopping distance are proven infeasible, cells well above it verified; only the cell at the
    boundary may stay Unknown.
    """
    for i in range(10):
        assert formal_ledger.outcome((i,)) == Outcome.SafetyInfeasible
        assert formal_ledger.entries[(i,)].evidence["ics_status"] == "Inevitable"
    assert formal_ledger.outcome((10,)) in (Outcome.SafeVerified, Outcome.Unknown)
    for i in range(11, 20):
        assert formal_ledger.outcome((i,)) == Outcome.SafeVerified
    assert penetration_rate(formal_ledger) >= 0.9
    assert 0.45 <= safe_coverage(formal_ledger) <= 0.5
    assert safe_coverage(formal_ledger) <= penetration_rate(formal_ledger)


def test_formal_report_volumes(formal_ledger):
    report = coverage_report(formal_ledger)
    assert report.infeasible_volume == pytest.approx(10.0)
    assert report.unverified_volume == 0
    assert report.verified_volume + report.unknown_volume == pytest.approx(10.0)
    assert not report.full_coverage
    assert report.threshold_r == pytest.approx(report.counts["SafeVerified"] / 20)


def test_mixed_falls_back_to_samples():
    ledger = run_campaign(SPACE, RES, SPEC, brake(), "Mixed", EPISODE)
    assert ledger.counts()[Outcome.SafetyInfeasible] == 10
    assert ledger.counts()[Outcome.SafeVerified] == 10
    for i in range(11, 20):
        assert ledger.entries[(i,)].evidence["mode"] == "formal"
    # the boundary cell counts only if the formal engine decided it
    assert penetration_rate(ledger) == pytest.approx(float(formal_volume(ledger)) / 10.0)
    assert penetration_rate(ledger) >= 0.9


def test_mixed_black_box():
    """
    Sampled cells count toward the safe coverage but never toward the penetration rate.
    """
    policy = Policy("opaque", kind="BlackBox", function=opaque_brake)
    ledger = run_campaign(SPACE, RES, SPEC, policy, CampaignMode.Mixed, EPISODE)
    assert ledger.counts()[Outcome.UnsafeObserved] == 10
    assert ledger.counts()[Outcome.SafeVerified] == 10
    assert ledger.entries[(15,)].evidence["mode"] == "mixed_sample"
    assert formal_volume(ledger) == 0
    assert penetration_rate(ledger) == 0.0
    report = coverage_report(ledger)
    assert report.safe_coverage == pytest.approx(0.5)
    assert report.formal_coverage == 0.0
    assert report.penetration_rate == 0.0


def test_mixed_ledger_keeps_evidence_modes(tmp_path):
    policy = Policy("opaque", kind="BlackBox", function=opaque_brake)
    path = tmp_path / "ledger.json"
    run_campaign(SPACE, RES, SPEC, policy, CampaignMode.Mixed, EPISODE).save(str(path))
    assert penetration_rate(CoverageLedger.load(str(path))) == 0.0


def test_formal_rejects_black_box():
    policy = Policy("opaque", kind="BlackBox", function=opaque_brake)
    with pytest.raises(PolicyKindError, match="BlackBox"):
        run_campaign(SPACE, RES, SPEC, policy, "Formal", EPISODE)


def test_corner_testing():
    """
    The cell [10, 11] collides at its lower corner.
    """
    engine = FormalEngine(cell_testing="corners")
    ledger = run_campaign(SPACE, RES, SPEC, brake(), "SampleBased", EPISODE, engine)
    assert ledger.counts()[Outcome.UnsafeObserved] == 11
    assert len(ledger.entries[(10,)].evidence["points"]) == 3
    assert ledger.cell_testing.value == "corners"


def test_worker_count_does_not_change_the_ledger(sample_ledger):
    ledger = run_campaign(SPACE, RES, SPEC, brake(), "SampleBased", EPISODE, FormalEngine(jobs=3))
    assert ledger.to_json() == sample_ledger.to_json()


def test_cell_subset():
    cells = CoverageLedger(SPACE, RES, "SampleBased", SPEC).cells[:4]
    ledger = run_campaign(SPACE, RES, SPEC, brake(), "SampleBased", EPISODE, cells=cells)
    assert ledger.counts()[Outcome.Unverified] == 16
    assert coverage_report(ledger).unverified_volume == pytest.approx(16.0)


def test_trace_dir(tmp_path):
    cells = CoverageLedger(SPACE, RES, "SampleBased", SPEC).cells[:2]
    ledger = run_campaign(SPACE, RES, SPEC, brake(), "SampleBased", EPISODE, cells=cells, trace_dir=str(tmp_path))
    assert ledger.entries[(0,)].evidence["trace"] == "cell_0_p0.csv"
    assert (tmp_path / "cell_1_p0.csv").exists()


def test_ledger_save_load(tmp_path, sample_ledger):
    path = tmp_path / "ledger.json"
    sample_ledger.save(str(path))
    back = CoverageLedger.load(str(path))
    assert back.to_json() == sample_ledger.to_json()
    assert back.matches(sample_ledger)
    data = json.loads(path.read_text())
    assert data["statistics"]["safe_coverage"] == pytest.approx(0.5)
    assert len(data["cells"]) == 20


def test_ledger_rejects_foreign_files():
    with pytest.raises(ValueError, match="Not a coverage ledger"):
        CoverageLedger.from_dict({"format": "something-else"})


def test_matrix_csv(tmp_path, sample_ledger):
    path = tmp_path / "matrix.csv"
    write_matrix_csv(sample_ledger, str(path))
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["idx_d", "d", "outcome"]
    assert rows[1] == ["0", "0.5", "UnsafeObserved"]
    assert rows[-1] == ["19", "19.5", "SafeVerified"]
    assert len(rows) == 21


def test_unbound_parameter_names_the_cell():
    space = ScenarioSpace("wall", (ContinuousParam("d", 0.0, 20.0),), (DiscreteParam("light", ("day", "night")),))
    with pytest.raises(BindingError, match=r"Cell \(0, 0\)"):
        run_campaign(space, RES, SPEC, brake(), "SampleBased", EPISODE)


def test_resolution_checked_against_space():
    with pytest.raises(ValueError, match="half width"):
        run_campaign(SPACE, Resolution((0.5, 0.5)), SPEC, brake(), "SampleBased", EPISODE)


def test_evolution():
    ledgers, report = run_evolution(SPACE, RES, SPEC, [idle(), brake(), brake()], "SampleBased", EPISODE)
    assert [it["counts"]["UnsafeObserved"] for it in report.iterations] == [20, 10, 10]
    assert report.deltas[0]["UnsafeObserved"] == pytest.approx(-10.0)
    assert report.deltas[0]["SafeVerified"] == pytest.approx(10.0)
    assert report.monotone
    assert report.converged
    assert report.target_cells == [(i,) for i in range(10)]
    assert report.iterations[0]["policy"] == "idle"


def test_evolution_not_converged(sample_ledger):
    worse = run_campaign(SPACE, RES, SPEC, idle(), "SampleBased", EPISODE)
    report = evolution_report([sample_ledger, worse])
    assert not report.monotone
    assert not report.converged
    assert len(report.target_cells) == 20


@pytest.mark.parametrize("first, converged", [(0, False), (10, True)])
def test_evolution_single_ledger(sample_ledger, first, converged):
    ledger = run_campaign(SPACE, RES, SPEC, brake(), "SampleBased", EPISODE, cells=sample_ledger.cells[first:])
    report = evolution_report([ledger])
    assert report.deltas == []
    assert report.monotone
    assert report.converged is converged
    assert len(report.target_cells) == (0 if converged else 10)


def test_evolution_errors(sample_ledger):
    with pytest.raises(ValueError, match="at least one ledger"):
        evolution_report([])
    other_spec = SafetySpec("Shorter horizon.", "G[0,3] collision_free")
    other = run_campaign(SPACE, RES, other_spec, brake(), "SampleBased", EPISODE, cells=[])
    with pytest.raises(LedgerMismatchError, match="do not share"):
        evolution_report([sample_ledger, other])


@pytest.mark.parametrize(
    "volumes, message",
    [
        ({"verified_volume": 5.0}, "sum to"),
        ({"safe_coverage": 0.9, "penetration_rate": 0.5}, "cannot exceed the penetration rate"),
        ({"threshold_r": 1.5}, r"lie in \[0,1\]"),
    ],
)
def test_report_checks(volumes, message):
    values = dict(
        mode=CampaignMode.Formal,
        safe_coverage=0.5,
        penetration_rate=0.5,
        threshold_r=0.5,
        space_volume=20.0,
        verified_volume=10.0,
        unsafe_volume=10.0,
        infeasible_volume=0.0,
        unknown_volume=0.0,
        unverified_volume=0.0,
        full_coverage=False,
    )
    values.update(volumes)
    with pytest.raises(ValueError, match=message):
        CoverageReport(**values)


@pytest.mark.parametrize(
    "clause, formula, error",
    [
        ("", "G[0,5] collision_free", ValueError),
        ("No collision.", 3.0, TypeError),
    ],
)
def test_safety_spec_checks(clause, formula, error):
    with pytest.raises(error):
        SafetySpec(clause, formula)
