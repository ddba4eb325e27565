"""
Deterministic fixed-step traffic simulator: one ego vehicle driven by a Policy and up to four agents on a straight
multi-lane road. Vehicles are axis-aligned boxes (the bicycle ego uses the box enclosing its rotated footprint).

Coordinates: x along the road, y lateral with the ego lane centered on y = 0 and further lanes stacked towards +y.
Positions are vehicle centers.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicalSystem
from .enums import AgentBehavior
from .errors import BindingError
from .policy import Policy
from .reachability import n_steps
from .stl_monitor import Signal
from .utils import LOGGER, check_enum, check_finite, check_nonnegative, check_positive, log

MAX_AGENTS = 4
MAX_SAMPLES = 100_000
LARGE_GAP = 1e6

_EGO_MODELS = {
    "double_integrator": ([-5.0], [5.0]),
    "kinematic_bicycle": ([-0.5, -5.0], [0.5, 5.0]),
}


@dataclass(frozen=True)
class EgoConfig:
    """
    Ego vehicle.

    Attributes
    ----------
    model: str
        "double_integrator" (longitudinal only) or "kinematic_bicycle".
    x, y, v, heading: float
        Initial center position, speed and heading.
    length, width: float
        Footprint in meters.
    u_lower, u_upper: tuple
        Control box in the model's control order ((a,) or (delta, a)); model defaults when None.
    wheelbase: float
        Bicycle wheelbase.
    """

    model: str = "double_integrator"
    x: float = 0.0
    y: float = 0.0
    v: float = 10.0
    heading: float = 0.0
    length: float = 4.5
    width: float = 1.8
    u_lower: tuple = None
    u_upper: tuple = None
    wheelbase: float = 2.7

    def __post_init__(self):
        if self.model not in _EGO_MODELS:
            raise ValueError(f"Error : ego model must be one of {sorted(_EGO_MODELS)}, given : {self.model}")
        lower, upper = _EGO_MODELS[self.model]
        object.__setattr__(self, "u_lower", tuple(float(v) for v in (self.u_lower or lower)))
        object.__setattr__(self, "u_upper", tuple(float(v) for v in (self.u_upper or upper)))
        for name in ("x", "y", "v", "heading"):
            check_finite(getattr(self, name), f"ego.{name}")
        check_positive(self.length, "ego.length")
        check_positive(self.width, "ego.width")
        check_positive(self.wheelbase, "ego.wheelbase")


@dataclass(frozen=True)
class AgentConfig:
    """
    Another vehicle, driving along x in a fixed lane.

    Attributes
    ----------
    behavior: AgentBehavior
        ConstantVelocity, or BoundedAccel with acceleration in [d_lower, d_upper].
    gap: float
        Initial bumper gap ahead of the ego front bumper (negative: behind the ego).
    y: float
        Lateral position.
    v: float
        Initial speed (>= 0).
    accel: float
        BoundedAccel constant acceleration, clipped to [d_lower, d_upper].
    random_profile: bool
        BoundedAccel draws a piecewise-constant acceleration uniformly in [d_lower, d_upper] every profile_period
        seconds instead of using `accel`.
    """

    behavior: AgentBehavior = AgentBehavior.ConstantVelocity
    gap: float = 20.0
    y: float = 0.0
    v: float = 0.0
    accel: float = 0.0
    d_lower: float = -3.0
    d_upper: float = 3.0
    random_profile: bool = False
    profile_period: float = 1.0
    length: float = 4.5
    width: float = 1.8

    def __post_init__(self):
        object.__setattr__(self, "behavior", check_enum(self.behavior, AgentBehavior, "agent behavior"))
        for name in ("gap", "y", "accel", "d_lower", "d_upper"):
            check_finite(getattr(self, name), f"agent.{name}")
        check_nonnegative(self.v, "agent.v")
        if self.d_lower > self.d_upper:
            raise ValueError(f"Error : agent needs d_lower <= d_upper, given : [{self.d_lower}, {self.d_upper}]")
        check_positive(self.profile_period, "agent.profile_period")
        check_positive(self.length, "agent.length")
        check_positive(self.width, "agent.width")

    def acceleration_bounds(self) -> tuple[float, float]:
        if self.behavior == AgentBehavior.ConstantVelocity:
            return 0.0, 0.0
        return self.d_lower, self.d_upper


@dataclass(frozen=True)
class RoadConfig:
    lane_width: float = 3.5
    n_lanes: int = 2

    def __post_init__(self):
        check_positive(self.lane_width, "road.lane_width")
        if not isinstance(self.n_lanes, int) or self.n_lanes < 1:
            raise ValueError(f"Error : road.n_lanes must be a positive integer, given : {self.n_lanes}")

    @property
    def bounds(self) -> tuple[float, float]:
        return -self.lane_width / 2, (self.n_lanes - 0.5) * self.lane_width


def _default_domain() -> dict:
    return {"x": (-1e3, 1e5), "y": (-50.0, 50.0), "v": (-50.0, 100.0), "heading": (-2 * np.pi, 2 * np.pi)}


@dataclass(frozen=True)
class EpisodeConfig:
    """
    One simulation episode.

    Attributes
    ----------
    duration, step: float
        Episode length and integration step in seconds; at most 10^5 steps.
    ego: EgoConfig
    agents: tuple[AgentConfig, ...]
        At most four agents; agent 0 is the target of pass_margin and follow_gap.
    road: RoadConfig
    binding: dict[str, str]
        Scenario parameter name -> field path, e.g. {"d": "agents.0.gap", "v": "ego.v"}.
    scenario: dict
        Parameter values bound by bind().
    seed: int
        Seed of every random draw of the episode (agent profiles, grey-box term).
    domain: dict
        Simulation domain of the ego, {"x"|"y"|"v"|"heading": (lo, hi)}; leaving it truncates the episode.
    """

    duration: float = 10.0
    step: float = 0.05
    ego: EgoConfig = field(default_factory=EgoConfig)
    agents: tuple = ()
    road: RoadConfig = field(default_factory=RoadConfig)
    binding: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)
    seed: int = 0
    domain: dict = field(default_factory=_default_domain)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) > MAX_AGENTS:
            raise ValueError(f"Error : at most {MAX_AGENTS} agents, given : {len(self.agents)}")
        count = n_steps(self.duration, self.step)
        if count > MAX_SAMPLES:
            raise ValueError(f"Error : duration / step must be <= {MAX_SAMPLES}, given : {count}")
        domain = {**_default_domain(), **self.domain}
        for key, (lo, hi) in domain.items():
            if key not in ("x", "y", "v", "heading") or not lo < hi:
                raise ValueError(f"Error : invalid simulation domain entry {key}, given : {(lo, hi)}")
        object.__setattr__(self, "domain", domain)

    @property
    def n_samples(self) -> int:
        return n_steps(self.duration, self.step) + 1

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["agents"] = [dict(a, behavior=a["behavior"].value) for a in out["agents"]]
        out["domain"] = {k: list(v) for k, v in sorted(self.domain.items())}
        return out


def _set_path(cfg: EpisodeConfig, path: str, value):
    parts = path.split(".")
    try:
        if parts[0] == "ego" and len(parts) == 2:
            return dataclasses.replace(cfg, ego=dataclasses.replace(cfg.ego, **{parts[1]: value}))
        if parts[0] == "road" and len(parts) == 2:
            return dataclasses.replace(cfg, road=dataclasses.replace(cfg.road, **{parts[1]: value}))
        if parts[0] == "agents" and len(parts) == 3:
            i = int(parts[1])
            agents = list(cfg.agents)
            agents[i] = dataclasses.replace(agents[i], **{parts[2]: value})
            return dataclasses.replace(cfg, agents=tuple(agents))
        if len(parts) == 1 and parts[0] in ("duration", "seed"):
            return dataclasses.replace(cfg, **{parts[0]: value})
    except (TypeError, ValueError, IndexError) as e:
        raise BindingError(f"Cannot bind {value!r} to '{path}': {e}") from None
    raise BindingError(f"Unknown binding path '{path}'")


def bind(cfg: EpisodeConfig, scenario_values: dict) -> EpisodeConfig:
    """
    Ground scenario parameters into the episode.

    Parameters
    ----------
    cfg: EpisodeConfig
        Template episode carrying the binding table.
    scenario_values: dict
        Parameter name -> value (float for continuous, str for discrete parameters).

    Returns
    -------
    A new EpisodeConfig with every bound field set and `scenario` recorded.

    Raises
    ------
    BindingError
        When a parameter has no binding or the field rejects the value.
    """
    bound = cfg
    for name, value in scenario_values.items():
        if name not in cfg.binding:
            raise BindingError(f"Scenario parameter '{name}' has no binding, bound parameters : {sorted(cfg.binding)}")
        bound = _set_path(bound, cfg.binding[name], value)
    return dataclasses.replace(bound, scenario=dict(scenario_values))


def ego_system(cfg: EpisodeConfig) -> DynamicalSystem:
    ego, domain = cfg.ego, cfg.domain
    if ego.model == "double_integrator":
        x_lower, x_upper = [domain["x"][0], domain["v"][0]], [domain["x"][1], domain["v"][1]]
        return DynamicalSystem(ego.model, ego.u_lower, ego.u_upper, x_lower, x_upper)
    x_lower = [domain["x"][0], domain["y"][0], domain["heading"][0], domain["v"][0]]
    x_upper = [domain["x"][1], domain["y"][1], domain["heading"][1], domain["v"][1]]
    return DynamicalSystem(ego.model, ego.u_lower, ego.u_upper, x_lower, x_upper, params={"wheelbase": ego.wheelbase})


def _ego_state(cfg: EpisodeConfig) -> np.ndarray:
    ego = cfg.ego
    if ego.model == "double_integrator":
        return np.array([ego.x, ego.v])
    return np.array([ego.x, ego.y, ego.heading, ego.v])


def _ego_pose(cfg: EpisodeConfig, state: np.ndarray) -> tuple[float, float, float, float]:
    if cfg.ego.model == "double_integrator":
        return state[0], cfg.ego.y, 0.0, state[1]
    return state[0], state[1], state[2], state[3]


def _half_extents(length: float, width: float, heading: float) -> tuple[float, float]:
    c, s = abs(np.cos(heading)), abs(np.sin(heading))
    return (c * length + s * width) / 2, (s * length + c * width) / 2


def channel_names(n_agents: int) -> list[str]:
    names = ["ego_x", "ego_y", "ego_heading", "ego_v"]
    for i in range(n_agents):
        names += [f"agent{i}_x", f"agent{i}_y", f"agent{i}_v"]
    return names + ["gap", "lead_v", "clearance", "road_margin", "lane_offset", "pass_margin", "follow_gap", "fallback"]


def _observe(cfg: EpisodeConfig, t: float, state: np.ndarray, agents: np.ndarray) -> dict:
    """agents: array (n, 3) of x, y, v."""
    x, y, heading, v = _ego_pose(cfg, state)
    hx, hy = _half_extents(cfg.ego.length, cfg.ego.width, heading)
    obs = {"t": t, "ego_x": x, "ego_y": y, "ego_heading": heading, "ego_v": v}
    gap, lead_v, clearance = LARGE_GAP, v, LARGE_GAP
    lane_half = cfg.road.lane_width / 2
    for i, (agent, (ax, ay, av)) in enumerate(zip(cfg.agents, agents)):
        obs[f"agent{i}_x"], obs[f"agent{i}_y"], obs[f"agent{i}_v"] = ax, ay, av
        ahx, ahy = agent.length / 2, agent.width / 2
        dx_sep = abs(ax - x) - (ahx + hx)
        dy_sep = abs(ay - y) - (ahy + hy)
        clearance = min(clearance, max(dx_sep, dy_sep))
        if ax > x and abs(ay - y) < lane_half:
            bumper_gap = (ax - ahx) - (x + hx)
            if bumper_gap < gap:
                gap, lead_v = bumper_gap, av
    road_lo, road_hi = cfg.road.bounds
    obs["gap"], obs["lead_v"], obs["clearance"] = gap, lead_v, clearance
    obs["road_margin"] = min((y - hy) - road_lo, road_hi - (y + hy))
    obs["lane_offset"] = y
    if cfg.agents:
        ax, _, _ = agents[0]
        half = cfg.agents[0].length / 2
        obs["pass_margin"] = (x - hx) - (ax + half)
        obs["follow_gap"] = (ax - half) - (x + hx)
    else:
        obs["pass_margin"], obs["follow_gap"] = LARGE_GAP, LARGE_GAP
    return obs


def _initial_agents(cfg: EpisodeConfig) -> np.ndarray:
    ego_front = cfg.ego.x + cfg.ego.length / 2
    rows = [(ego_front + a.gap + a.length / 2, a.y, a.v) for a in cfg.agents]
    return np.array(rows, dtype=float).reshape(-1, 3)


def initial_channels(cfg: EpisodeConfig) -> dict:
    """Observation at t = 0, without the fallback flag."""
    return _observe(cfg, 0.0, _ego_state(cfg), _initial_agents(cfg))


def lead_agent_index(cfg: EpisodeConfig) -> int | None:
    """Index of the nearest agent ahead in the ego lane at t = 0, None when the lane ahead is empty."""
    agents = _initial_agents(cfg)
    x, y = cfg.ego.x, cfg.ego.y
    ahead = [i for i, (ax, ay, _) in enumerate(agents) if ax > x and abs(ay - y) < cfg.road.lane_width / 2]
    if not ahead:
        return None
    return min(ahead, key=lambda i: agents[i, 0] - cfg.agents[i].length / 2)


def _inside(cfg: EpisodeConfig, state: np.ndarray) -> bool:
    x, y, heading, v = _ego_pose(cfg, state)
    values = {"x": x, "y": y, "heading": heading, "v": v}
    for key, value in values.items():
        lo, hi = cfg.domain[key]
        if not (np.isfinite(value) and lo <= value <= hi):
            return False
    return True


def roll_out(cfg: EpisodeConfig, policy: Policy, show_log: bool | str = False) -> Signal:
    """
    Simulate one episode with explicit Euler steps.

    Parameters
    ----------
    cfg: EpisodeConfig
        Bound episode.
    policy: Policy
        Ego policy; its commands are clipped to the ego control box.
    show_log: bool | str
        If True, all logs are printed. If "Status", only status logs. If False, only warnings.

    Returns
    -------
    The Signal with the channels of channel_names(len(cfg.agents)) and the applied controls. metadata records
    the seed, the scenario values and, when the ego left the simulation domain, "truncated" and "truncated_at".
    """
    system = ego_system(cfg)
    count = cfg.n_samples
    policy.reset(cfg.seed)
    agent_rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(len(cfg.agents))]
    profile = np.array([_agent_accel(a, rng) for a, rng in zip(cfg.agents, agent_rngs)])

    state, agents = _ego_state(cfg), _initial_agents(cfg)
    names = channel_names(len(cfg.agents))
    rows, controls = [], []
    metadata = {"seed": cfg.seed, "scenario": dict(cfg.scenario), "policy": policy.name, "truncated": False}
    h = cfg.step
    for k in range(count):
        t = k * h
        obs = _observe(cfg, t, state, agents)
        command = policy.control(obs)
        obs["fallback"] = 1.0 if policy.fallback(obs) else 0.0
        rows.append([obs[name] for name in names])
        if cfg.ego.model == "double_integrator":
            u = np.array([command["accel"]])
        else:
            u = np.array([command.get("steer", 0.0), command["accel"]])
        u = np.clip(u, system.u_box[0], system.u_box[1])
        controls.append(u)
        if k == count - 1:
            break

        state = system.euler(state, u, h=h)
        agents[:, 0] += h * agents[:, 2]
        if len(cfg.agents):
            agents[:, 2] = np.maximum(agents[:, 2] + h * profile, 0.0)
        for i, agent in enumerate(cfg.agents):
            if agent.random_profile and agent.behavior == AgentBehavior.BoundedAccel:
                # a new draw for the step starting on a profile period boundary
                if _period_index((k + 1) * h, agent.profile_period) != _period_index(k * h, agent.profile_period):
                    profile[i] = _agent_accel(agent, agent_rngs[i])
        if not _inside(cfg, state):
            metadata["truncated"] = True
            metadata["truncated_at"] = (k + 1) * h
            LOGGER.warning(f"Ego left the simulation domain at t = {(k + 1) * h:.3f} s, episode truncated")
            break

    times = np.arange(len(rows)) * h
    control_names = ["accel"] if cfg.ego.model == "double_integrator" else ["steer", "accel"]
    log(
        f"Episode {cfg.scenario or ''} with {policy.name}: {len(rows)} samples",
        f"final state {dict(zip(names, rows[-1]))}" if show_log is True else None,
    )
    return Signal(times, np.array(rows), names, np.array(controls), control_names, metadata)


def _agent_accel(agent: AgentConfig, rng: np.random.Generator) -> float:
    if agent.behavior == AgentBehavior.ConstantVelocity:
        return 0.0
    if agent.random_profile:
        return float(rng.uniform(agent.d_lower, agent.d_upper))
    return float(np.clip(agent.accel, agent.d_lower, agent.d_upper))


def _period_index(t: float, period: float) -> int:
    return int(np.floor(t / period + 1e-9))
