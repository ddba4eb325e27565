import os
import re

import pytest
import yaml

from pyScenarioCoverage import ConfigError, Outcome, SpecKind, load_config, to_text
from pyScenarioCoverage.config import loads

CONFIGS = os.path.join(os.path.dirname(__file__), "configs")


def _path(name):
    return os.path.join(CONFIGS, name)


def _wall_tree():
    with open(_path("wall.yaml")) as f:
        return yaml.safe_load(f)


def _dump(tree):
    return yaml.safe_dump(tree, sort_keys=False)


def test_load_wall():
    cfg = load_config(_path("wall.yaml"))
    assert cfg.space.names == ["d"]
    assert cfg.resolution.half_widths == (0.5,)
    assert cfg.episode.binding == {"d": "agents.0.gap"}
    assert cfg.episode.agents[0].length == 0.5
    assert cfg.policy.name == "brake"
    assert to_text(cfg.spec.formula) == "G[0.0,5.0] collision_free"
    assert cfg.engine.jobs == 1
    assert cfg.output == {}
    assert re.fullmatch(r"0x[0-9a-f]{8}", cfg.hash)


def test_hash_follows_the_tree():
    first = load_config(_path("wall.yaml"))
    assert load_config(_path("wall.yaml")).hash == first.hash
    tree = _wall_tree()
    tree["episode"]["duration"] = 4.0
    assert loads(_dump(tree)).hash != first.hash


def test_reach_block():
    cfg = load_config(_path("wall.yaml"))
    assert cfg.reach.kind == SpecKind.MaxFRS
    result = cfg.reach.compute()
    assert result.contains([1.0])
    assert not result.contains([-1.5])
    assert result.metadata["kind"] == "maxfrs"
    assert cfg.reach.compute("maxbrs").metadata["kind"] == "maxbrs"


def test_engine_block():
    tree = _wall_tree()
    tree["engine"] = {"step": 0.1, "jobs": 4, "cell_testing": "corners", "grid_counts": [1000, 290, 1]}
    engine = loads(_dump(tree)).engine
    assert engine.step == 0.1
    assert engine.jobs == 4
    assert engine.cell_testing.value == "corners"
    assert engine.grid_counts == (1000, 290, 1)


def test_output_paths_follow_the_config(tmp_path):
    tree = _wall_tree()
    tree["output"] = {"ledger": "out/ledger.json", "matrix": "matrix.csv"}
    path = tmp_path / "campaign.yaml"
    path.write_text(_dump(tree))
    cfg = load_config(str(path))
    assert cfg.output["ledger"] == str(tmp_path / "out" / "ledger.json")
    assert cfg.output["matrix"] == str(tmp_path / "matrix.csv")


def test_unbound_discrete_parameter():
    tree = _wall_tree()
    tree["scenario_space"]["discrete"] = [{"name": "light", "values": ["day", "night"]}]
    with pytest.raises(ConfigError, match="'light' has no binding") as error:
        loads(_dump(tree))
    assert error.value.field == "episode.binding"


@pytest.mark.parametrize(
    "name, field",
    [
        ("missing_upper.yaml", "scenario_space.continuous[0].upper"),
        ("empty_discrete.yaml", "scenario_space.discrete[0].values"),
    ],
)
def test_fixture_errors(name, field):
    with pytest.raises(ConfigError) as error:
        load_config(_path(name))
    assert error.value.field == field
    assert field in str(error.value)


def test_missing_file():
    with pytest.raises(ConfigError, match="Cannot read config"):
        load_config(_path("no_such_config.yaml"))


def test_error_lines():
    text = "\n".join(
        [
            "version: 1",
            "scenario_space:",
            "  odd_name: wall",
            "  continuous:",
            "    - name: d",
            "      lower: 5.0",
            "      upper: 1.0",
            "  resolution: [0.5]",
        ]
    )
    with pytest.raises(ConfigError) as error:
        loads(text)
    assert error.value.field == "scenario_space.continuous[0]"
    assert error.value.line == 5
    assert "line 5" in str(error.value)


@pytest.mark.parametrize(
    "change, field, message",
    [
        (lambda t: t.update(version=2), "version", "Unsupported config version"),
        (lambda t: t.update(colour="red"), "colour", "Unknown key"),
        (lambda t: t["episode"].update(speed=3), "episode.speed", "Unknown key"),
        (lambda t: t["episode"].update(step="fast"), "episode.step", "Expected number"),
        (lambda t: t["episode"]["binding"].update(d="weather.rain"), "episode.binding", "Unknown binding path"),
        (lambda t: t["episode"]["binding"].update(v="ego.v"), "episode.binding.v", "Unknown key"),
        (lambda t: t["policy"].update(law="teleport"), "policy", "Unknown control law"),
        (lambda t: t["policy"].update(kind="GreyBox"), "policy", "needs a bounded term"),
        (lambda t: t["spec"].update(formula="G[0,5] (collision_free"), "spec.formula", "Invalid formula"),
        (lambda t: t["spec"].update(formula="G[0,5] teleported"), "spec.formula", "Unknown predicate"),
        (lambda t: t["spec"].update(clause=" "), "spec.clause", "non-empty clause"),
        (lambda t: t["scenario_space"].update(resolution=[0.5, 0.5]), "scenario_space.resolution", "half widths"),
        (lambda t: t["scenario_space"].update(resolution=[11.0]), "scenario_space.resolution", "must not exceed"),
        (lambda t: t.pop("policy"), "policy", "Missing required block"),
        (lambda t: t["reach"].update(kind="sideways"), "reach.kind", "kind must be one of"),
        (lambda t: t["reach"].update(horizon=[0.0, 0.25]), "reach.horizon", "step must divide"),
        (lambda t: t["reach"].update(horizon=[1.0]), "reach.horizon", r"Expected \[t0, t1\]"),
        (lambda t: t["reach"]["grid"].update(counts=[60, 60]), "reach.grid", "matching bounds and counts"),
        (lambda t: t.update(engine={"jobs": 0}), "engine", "positive integer"),
        (lambda t: t.update(output={"plots": "a.png"}), "output.plots", "Unknown key"),
    ],
)
def test_config_errors(change, field, message):
    tree = _wall_tree()
    change(tree)
    with pytest.raises(ConfigError, match=message) as error:
        loads(_dump(tree))
    assert error.value.field == field


def test_invalid_yaml():
    with pytest.raises(ConfigError, match="Invalid YAML") as error:
        loads("version: 1\nscenario_space: [1, 2\n")
    assert error.value.line is not None


def test_empty_document():
    with pytest.raises(ConfigError, match="Missing required field"):
        loads("")


def test_outcome_names_are_stable():
    """
    Ledgers store outcomes by value; the values are part of the file format.
    """
    assert [o.value for o in Outcome] == [
        "SafeVerified",
        "UnsafeObserved",
        "SafetyInfeasible",
        "Unknown",
        "Unverified",
    ]
