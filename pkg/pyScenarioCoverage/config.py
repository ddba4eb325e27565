"""
Campaign configuration: a YAML document validated as a whole before any computation. Errors name the offending
field and its line in the file. See docs/config_schema.md for the schema.
"""

import dataclasses
import os
from dataclasses import dataclass

import yaml

from .coverage import SafetySpec
from .dynamics import DynamicalSystem
from .enums import SpecKind
from .errors import BindingError, ConfigError, StlParseError
from .grid import GridGeometry, StateSet
from .policy import Policy
from .reachability import ReachSpec, n_steps, reach
from .scenario_space import ContinuousParam, DiscreteParam, Resolution, ScenarioSpace, enumerate_cells
from .traffic_sim import AgentConfig, EgoConfig, EpisodeConfig, RoadConfig, bind
from .utils import check_enum, checksum
from .verification import FormalEngine

CONFIG_VERSION = 1
BLOCKS = ("version", "scenario_space", "episode", "policy", "spec", "engine", "reach", "output")
OUTPUT_KEYS = ("ledger", "report", "matrix", "traces", "reach")
_REQUIRED = object()


def _node_lines(node: yaml.Node, path: str, lines: dict):
    lines.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            child = f"{path}.{key.value}" if path else str(key.value)
            lines[child] = key.start_mark.line + 1
            _node_lines(value, child, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, value in enumerate(node.value):
            _node_lines(value, f"{path}[{i}]", lines)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class _Block:
    """Read access to one mapping of the tree, raising ConfigError at the right field."""

    def __init__(self, data, path: str, lines: dict):
        self.path = path
        self.lines = lines
        if not isinstance(data, dict):
            raise self.error("Expected a mapping")
        self.data = data

    def field(self, key: str = None) -> str:
        if key is None:
            return self.path
        return f"{self.path}.{key}" if self.path else key

    def error(self, message: str, key: str = None) -> ConfigError:
        path = self.field(key)
        return ConfigError(message, path, self.lines.get(path))

    def check_keys(self, allowed):
        unknown = sorted(set(self.data) - set(allowed))
        if unknown:
            raise self.error(f"Unknown key, expected one of {sorted(allowed)}", unknown[0])

    def get(self, key: str, kind: str = None, default=_REQUIRED):
        if key not in self.data or self.data[key] is None:
            if default is _REQUIRED:
                raise self.error("Missing required field", key)
            return default
        value = self.data[key]
        checks = {
            "number": _is_number,
            "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
            "str": lambda v: isinstance(v, str),
            "bool": lambda v: isinstance(v, bool),
            "numbers": lambda v: isinstance(v, list) and v and all(_is_number(x) for x in v),
            "list": lambda v: isinstance(v, list),
        }
        if kind is not None and not checks[kind](value):
            raise self.error(f"Expected {kind}, given : {value!r}", key)
        return value

    def block(self, key: str, required: bool = True) -> "_Block | None":
        if key not in self.data or self.data[key] is None:
            if required:
                raise self.error("Missing required block", key)
            return None
        return _Block(self.data[key], self.field(key), self.lines)

    def blocks(self, key: str) -> list["_Block"]:
        items = self.get(key, "list", [])
        return [_Block(item, f"{self.field(key)}[{i}]", self.lines) for i, item in enumerate(items)]

    def build(self, factory, key: str = None, **kwargs):
        """Call factory(**kwargs), turning its validation errors into a ConfigError at this block (or key)."""
        try:
            return factory(**kwargs)
        except (ValueError, TypeError) as e:
            raise self.error(str(e), key) from None


def _dataclass_block(block: _Block, cls, tuples: tuple = ()) -> dict:
    names = [f.name for f in dataclasses.fields(cls)]
    block.check_keys(names)
    values = {}
    for key, value in block.data.items():
        if key in tuples:
            value = tuple(block.get(key, "numbers"))
        values[key] = value
    return values


@dataclass(frozen=True)
class ReachConfig:
    """
    Stand-alone set computation of a config (the reach block).

    Attributes
    ----------
    system: DynamicalSystem
        Model with its control, disturbance and domain boxes.
    geometry: GridGeometry
        Grid of the computation; its box is the model domain.
    seed_lower, seed_upper: tuple
        Box of the seed (initial or target) set.
    horizon: tuple[float, float]
        Horizon [t0, t1].
    step: float
        Propagation step.
    kind: SpecKind
        Default set kind, overridable from the command line.
    """

    system: DynamicalSystem
    geometry: GridGeometry
    seed_lower: tuple
    seed_upper: tuple
    horizon: tuple
    step: float
    kind: SpecKind = SpecKind.MaxFRS
    input_splits: int = 1
    disturbance_samples: int = 3

    def seed_set(self) -> StateSet:
        return StateSet.from_box(self.geometry, self.seed_lower, self.seed_upper)

    def compute(self, kind: SpecKind | str = None, show_log: bool | str = False) -> StateSet:
        kind = self.kind if kind is None else check_enum(kind, SpecKind, "spec kind")
        spec = ReachSpec.from_kind(kind, self.horizon)
        result = reach(
            self.system,
            self.seed_set(),
            spec,
            self.step,
            self.input_splits,
            self.disturbance_samples,
            show_log,
        )
        result.metadata["kind"] = kind.value
        return result


@dataclass(frozen=True)
class CampaignConfig:
    """
    A validated campaign config.

    Attributes
    ----------
    path: str
        Config file, or "" for configs built from a string.
    space: ScenarioSpace
        Scenario space.
    resolution: Resolution
        Cell half widths.
    episode: EpisodeConfig
        Episode template with its binding table.
    policy: Policy
        Ego policy.
    spec: SafetySpec
        Safety clause and formula.
    engine: FormalEngine
        Formal engine numerics.
    reach: ReachConfig | None
        Stand-alone set computation, if the config has a reach block.
    output: dict
        Output paths (ledger, report, matrix, traces, reach), resolved against the config directory.
    hash: str
        Provenance hash of the parsed tree.
    """

    path: str
    space: ScenarioSpace
    resolution: Resolution
    episode: EpisodeConfig
    policy: Policy
    spec: SafetySpec
    engine: FormalEngine
    reach: ReachConfig | None
    output: dict
    hash: str


def _scenario_space(block: _Block) -> tuple[ScenarioSpace, Resolution]:
    block.check_keys(("odd_name", "continuous", "discrete", "resolution"))
    continuous = []
    for param in block.blocks("continuous"):
        param.check_keys(("name", "lower", "upper"))
        continuous.append(
            param.build(
                ContinuousParam,
                name=param.get("name", "str"),
                lower=param.get("lower", "number"),
                upper=param.get("upper", "number"),
            )
        )
    discrete = []
    for param in block.blocks("discrete"):
        param.check_keys(("name", "values"))
        values = param.get("values", "list")
        if not values:
            raise param.error("A discrete parameter needs at least one value", "values")
        discrete.append(param.build(DiscreteParam, "values", name=param.get("name", "str"), values=tuple(values)))
    space = block.build(
        ScenarioSpace, odd_name=block.get("odd_name", "str"), continuous=tuple(continuous), discrete=tuple(discrete)
    )
    half_widths = block.get("resolution", "numbers") if continuous else block.get("resolution", "list", [])
    res = block.build(Resolution, "resolution", half_widths=tuple(half_widths))
    try:
        res.check_against(space)
    except ValueError as e:
        raise block.error(str(e), "resolution") from None
    return space, res


def _episode(block: _Block, space: ScenarioSpace) -> EpisodeConfig:
    block.check_keys(("duration", "step", "seed", "ego", "agents", "road", "binding", "domain"))
    kwargs = {}
    for key, kind in (("duration", "number"), ("step", "number"), ("seed", "int")):
        if key in block.data:
            kwargs[key] = block.get(key, kind)
    ego = block.block("ego", required=False)
    if ego is not None:
        kwargs["ego"] = ego.build(EgoConfig, **_dataclass_block(ego, EgoConfig, ("u_lower", "u_upper")))
    agents = []
    for agent in block.blocks("agents"):
        agents.append(agent.build(AgentConfig, **_dataclass_block(agent, AgentConfig)))
    kwargs["agents"] = tuple(agents)
    road = block.block("road", required=False)
    if road is not None:
        kwargs["road"] = road.build(RoadConfig, **_dataclass_block(road, RoadConfig))
    binding = block.block("binding", required=False)
    if binding is not None:
        binding.check_keys(space.names)
        kwargs["binding"] = {name: binding.get(name, "str") for name in binding.data}
    domain = block.block("domain", required=False)
    if domain is not None:
        kwargs["domain"] = {key: tuple(domain.get(key, "numbers")) for key in domain.data}
    episode = block.build(EpisodeConfig, **kwargs)
    # every binding path must accept the values of the first cell
    try:
        bind(episode, space.scenario_parameters(_first_center(space)))
    except BindingError as e:
        raise block.error(str(e), "binding") from None
    return episode


def _first_center(space: ScenarioSpace):
    """Center of the lowest cell of the space at the coarsest resolution, used to dry-run the binding table."""
    half_widths = [p.width / 2 for p in space.continuous]
    return enumerate_cells(space, Resolution(tuple(half_widths)))[0].center


def _policy(block: _Block) -> Policy:
    block.check_keys(("name", "kind", "law", "params", "bounded_term", "function", "seed"))
    params = block.block("params", required=False)
    bounded = block.get("bounded_term", "numbers", None)
    return block.build(
        Policy,
        name=block.get("name", "str"),
        kind=block.get("kind", "str", "WhiteBox"),
        law=block.get("law", "str", None),
        params=params.data if params is not None else None,
        bounded_term=tuple(bounded) if bounded is not None else None,
        function=block.get("function", "str", None),
        seed=block.get("seed", "int", 0),
    )


def _spec(block: _Block) -> SafetySpec:
    block.check_keys(("clause", "formula"))
    clause = block.get("clause", "str")
    formula = block.get("formula", "str")
    try:
        return SafetySpec(clause, formula)
    except StlParseError as e:
        raise block.error(f"Invalid formula: {e}", "formula") from None
    except ValueError as e:
        raise block.error(str(e), "clause") from None


def _engine(block: _Block | None) -> FormalEngine:
    if block is None:
        return FormalEngine()
    values = _dataclass_block(block, FormalEngine, ("grid_lower", "grid_upper", "grid_counts"))
    return block.build(FormalEngine, **values)


def _reach(block: _Block | None) -> ReachConfig | None:
    if block is None:
        return None
    block.check_keys(
        (
            "model",
            "params",
            "u_lower",
            "u_upper",
            "d_lower",
            "d_upper",
            "grid",
            "seed",
            "horizon",
            "step",
            "kind",
            "input_splits",
            "disturbance_samples",
        )
    )
    grid = block.block("grid")
    grid.check_keys(("lower", "upper", "counts"))
    lower, upper, counts = grid.get("lower", "numbers"), grid.get("upper", "numbers"), grid.get("counts", "numbers")
    params = block.block("params", required=False)
    system = block.build(
        DynamicalSystem,
        model=block.get("model", "str"),
        u_lower=block.get("u_lower", "numbers"),
        u_upper=block.get("u_upper", "numbers"),
        x_lower=lower,
        x_upper=upper,
        d_lower=block.get("d_lower", "numbers", None),
        d_upper=block.get("d_upper", "numbers", None),
        params=params.data if params is not None else None,
    )
    geometry = grid.build(GridGeometry, lower=lower, upper=upper, counts=counts, names=list(system.state_names))
    seed = block.block("seed")
    seed.check_keys(("lower", "upper"))
    horizon = block.get("horizon", "numbers")
    if len(horizon) != 2:
        raise block.error(f"Expected [t0, t1], given : {horizon}", "horizon")
    config = block.build(
        ReachConfig,
        system=system,
        geometry=geometry,
        seed_lower=tuple(seed.get("lower", "numbers")),
        seed_upper=tuple(seed.get("upper", "numbers")),
        horizon=tuple(horizon),
        step=block.get("step", "number"),
        kind=block.build(check_enum, "kind", value=block.get("kind", "str", "maxfrs"), enum_class=SpecKind, name="kind"),
        input_splits=block.get("input_splits", "int", 1),
        disturbance_samples=block.get("disturbance_samples", "int", 3),
    )
    block.build(config.seed_set, "seed")
    block.build(ReachSpec.from_kind, "horizon", kind=config.kind, horizon=config.horizon)
    block.build(n_steps, "horizon", span=config.horizon[1] - config.horizon[0], step=config.step)
    return config


def _output(block: _Block | None, base_dir: str) -> dict:
    if block is None:
        return {}
    block.check_keys(OUTPUT_KEYS)
    return {key: os.path.normpath(os.path.join(base_dir, block.get(key, "str"))) for key in block.data}


def loads(text: str, path: str = "") -> CampaignConfig:
    """
    Parse and validate a campaign config.

    Parameters
    ----------
    text: str
        YAML document.
    path: str
        File the document was read from; relative output paths are resolved against its directory.

    Returns
    -------
    The validated CampaignConfig.

    Raises
    ------
    ConfigError
        With the dotted field path and line number of the first invalid field.
    """
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"Invalid YAML: {getattr(e, 'problem', e)}", "", mark.line + 1 if mark else None) from None
    lines = {}
    if node is not None:
        _node_lines(node, "", lines)
    root = _Block(data if data is not None else {}, "", lines)
    root.check_keys(BLOCKS)
    version = root.get("version", "int")
    if version != CONFIG_VERSION:
        raise root.error(f"Unsupported config version, expected {CONFIG_VERSION}, given : {version}", "version")

    space, res = _scenario_space(root.block("scenario_space"))
    return CampaignConfig(
        path=path,
        space=space,
        resolution=res,
        episode=_episode(root.block("episode"), space),
        policy=_policy(root.block("policy")),
        spec=_spec(root.block("spec")),
        engine=_engine(root.block("engine", required=False)),
        reach=_reach(root.block("reach", required=False)),
        output=_output(root.block("output", required=False), os.path.dirname(os.path.abspath(path)) if path else ""),
        hash=checksum(data),
    )


def load(path: str) -> CampaignConfig:
    """Read and validate the campaign config at path."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read config: {e.strerror}", path) from None
    return loads(text, path)
