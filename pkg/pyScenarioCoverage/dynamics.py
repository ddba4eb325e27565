"""
Library of controlled dynamical systems x' = f(x, u, d) and the DynamicalSystem wrapper that adds control,
disturbance and domain boxes.

Every model provides its flow for points, an interval enclosure of the flow over boxes, and the coefficient interval
of the one-step remainder: for a step h with the inputs held constant, the exact successor lies in
x + h * f(x, u, d) + h^2 * [r_lo, r_hi].
"""

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .interval import i_add, i_cos, i_mul, i_scale, i_sin, i_sub, i_tan
from .utils import check_bounds, checksum

MAX_STATE_DIM = 5


@dataclass(frozen=True)
class ModelDefinition:
    """
    A registered model.

    Attributes
    ----------
    name: str
        Identifier used in configs.
    state_names, control_names, disturbance_names: tuple[str, ...]
        Names of the coordinates.
    flow: Callable
        flow(x, u, d, params) -> x' for arrays of shape (..., n).
    interval_flow: Callable
        interval_flow(x, u, d, params) -> (lo, hi); x, u and d are (lo, hi) pairs of arrays of shape (k, .).
    remainder: Callable
        remainder(x, u, d, params, system) -> (lo, hi) coefficient of h^2 per state, shape (k, n).
    unsafe_region: Callable
        unsafe_region(params) -> {state name: (lo, hi)} collision region, or None when the model has none.
    defaults: dict
        Default model parameters.
    """

    name: str
    state_names: tuple[str, ...]
    control_names: tuple[str, ...]
    disturbance_names: tuple[str, ...]
    flow: Callable
    interval_flow: Callable
    remainder: Callable
    unsafe_region: Callable = lambda params: None
    defaults: dict = field(default_factory=dict)
    description: str = ""


_MODELS: dict[str, ModelDefinition] = {}


def register_model(definition: ModelDefinition) -> ModelDefinition:
    if len(definition.state_names) > MAX_STATE_DIM:
        raise ValueError(f"Error : models have at most {MAX_STATE_DIM} states, given : {len(definition.state_names)}")
    _MODELS[definition.name] = definition
    return definition


def get_model(name: str) -> ModelDefinition:
    try:
        return _MODELS[name]
    except KeyError:
        raise ValueError(f"Unknown model '{name}', available : {model_names()}") from None


def model_names() -> list[str]:
    return sorted(_MODELS)


def _zeros(x):
    return np.zeros_like(x[0], dtype=float), np.zeros_like(x[0], dtype=float)


# 1D integrator, x' = u
register_model(
    ModelDefinition(
        name="integrator_1d",
        state_names=("x",),
        control_names=("u",),
        disturbance_names=(),
        flow=lambda x, u, d, p: u[..., :1].copy(),
        interval_flow=lambda x, u, d, p: (u[0][:, :1].copy(), u[1][:, :1].copy()),
        remainder=lambda x, u, d, p, s: _zeros(x),
        description="Single integrator x' = u.",
    )
)


def _double_integrator_remainder(x, u, d, params, system):
    lo, hi = _zeros(x)
    lo[:, 0], hi[:, 0] = u[0][:, 0] / 2, u[1][:, 0] / 2
    return lo, hi


def _wall(params):
    wall = params.get("wall")
    return None if wall is None else {"p": (float(wall), np.inf)}


register_model(
    ModelDefinition(
        name="double_integrator",
        state_names=("p", "v"),
        control_names=("a",),
        disturbance_names=(),
        flow=lambda x, u, d, p: np.stack([x[..., 1], u[..., 0]], axis=-1),
        interval_flow=lambda x, u, d, p: (
            np.stack([x[0][:, 1], u[0][:, 0]], axis=-1),
            np.stack([x[1][:, 1], u[1][:, 0]], axis=-1),
        ),
        remainder=_double_integrator_remainder,
        unsafe_region=_wall,
        defaults={"wall": None},
        description="Longitudinal ego p' = v, v' = a; optional wall at p = wall.",
    )
)


def _bicycle_flow(x, u, d, params):
    theta, v = x[..., 2], x[..., 3]
    return np.stack(
        [v * np.cos(theta), v * np.sin(theta), v * np.tan(u[..., 0]) / params["wheelbase"], u[..., 1]], axis=-1
    )


def _bicycle_interval_flow(x, u, d, params):
    theta = (x[0][:, 2], x[1][:, 2])
    v = (x[0][:, 3], x[1][:, 3])
    delta = (u[0][:, 0], u[1][:, 0])
    dx = i_mul(v, i_cos(theta))
    dy = i_mul(v, i_sin(theta))
    dtheta = i_scale(i_mul(v, i_tan(delta)), 1.0 / params["wheelbase"])
    accel = (u[0][:, 1], u[1][:, 1])
    return (
        np.stack([dx[0], dy[0], dtheta[0], accel[0]], axis=-1),
        np.stack([dx[1], dy[1], dtheta[1], accel[1]], axis=-1),
    )


def _bicycle_remainder(x, u, d, params, system):
    # global second-derivative bound over the domain, halved
    v_max = np.max(np.abs(system.x_box[:, 3]))
    a_max = np.max(np.abs(system.u_box[:, 1]))
    tan_max = np.max(np.abs(np.tan(system.u_box[:, 0])))
    yaw_rate = v_max * tan_max / params["wheelbase"]
    bound = np.array([a_max + v_max * yaw_rate, a_max + v_max * yaw_rate, a_max * tan_max / params["wheelbase"], 0.0])
    hi = np.broadcast_to(bound / 2, x[0].shape).copy()
    return -hi, hi


register_model(
    ModelDefinition(
        name="kinematic_bicycle",
        state_names=("x", "y", "theta", "v"),
        control_names=("delta", "a"),
        disturbance_names=(),
        flow=_bicycle_flow,
        interval_flow=_bicycle_interval_flow,
        remainder=_bicycle_remainder,
        defaults={"wheelbase": 2.7},
        description="Kinematic bicycle, steering angle delta and acceleration a.",
    )
)


def _relative_interval_flow(x, u, d, params):
    gap_rate = i_sub((x[0][:, 2], x[1][:, 2]), (x[0][:, 1], x[1][:, 1]))
    return (
        np.stack([gap_rate[0], u[0][:, 0], d[0][:, 0]], axis=-1),
        np.stack([gap_rate[1], u[1][:, 0], d[1][:, 0]], axis=-1),
    )


def _relative_remainder(x, u, d, params, system):
    lo, hi = _zeros(x)
    closing = i_sub((d[0][:, 0], d[1][:, 0]), (u[0][:, 0], u[1][:, 0]))
    lo[:, 0], hi[:, 0] = closing[0] / 2, closing[1] / 2
    return lo, hi


register_model(
    ModelDefinition(
        name="relative_longitudinal",
        state_names=("gap", "ego_v", "lead_v"),
        control_names=("a",),
        disturbance_names=("lead_a",),
        flow=lambda x, u, d, p: np.stack([x[..., 2] - x[..., 1], u[..., 0], d[..., 0]], axis=-1),
        interval_flow=_relative_interval_flow,
        remainder=_relative_remainder,
        unsafe_region=lambda params: {"gap": (-np.inf, 0.0)},
        description="Ego behind a lead vehicle: gap' = lead_v - ego_v, ego_v' = a, lead_v' = lead_a.",
    )
)


def _as_box(lower, upper, n: int, name: str, strict: bool) -> np.ndarray:
    lower = [] if lower is None else [float(v) for v in np.atleast_1d(lower)]
    upper = [] if upper is None else [float(v) for v in np.atleast_1d(upper)]
    if len(lower) != n or len(upper) != n:
        raise ValueError(f"Error : {name} needs {n} lower and upper bounds, given : {len(lower)} and {len(upper)}")
    if n:
        check_bounds(lower, upper, name, strict=strict)
    return np.array([lower, upper], dtype=float).reshape(2, n)


class DynamicalSystem:
    """
    A registered model with its control box U, disturbance box D and domain box X.

    Parameters
    ----------
    model: str
        Registered model name.
    u_lower, u_upper: list[float]
        Control box.
    x_lower, x_upper: list[float]
        Domain box.
    d_lower, d_upper: list[float]
        Disturbance box, one entry per disturbance of the model (degenerate boxes allowed).
    params: dict
        Model parameters, overriding the model defaults.
    """

    def __init__(
        self,
        model: str,
        u_lower,
        u_upper,
        x_lower,
        x_upper,
        d_lower=None,
        d_upper=None,
        params: dict = None,
    ):
        self.definition = get_model(model)
        self.params = dict(self.definition.defaults)
        unknown = set(params or {}) - set(self.params)
        if unknown:
            raise ValueError(f"Error : unknown parameters for model {model}, given : {sorted(unknown)}")
        self.params.update(params or {})
        self.u_box = _as_box(u_lower, u_upper, self.dim_u, "control box", strict=False)
        self.x_box = _as_box(x_lower, x_upper, self.dim_x, "domain box", strict=True)
        if self.dim_d and d_lower is None and d_upper is None:
            d_lower, d_upper = [0.0] * self.dim_d, [0.0] * self.dim_d
        self.d_box = _as_box(d_lower, d_upper, self.dim_d, "disturbance box", strict=False)
        if model == "kinematic_bicycle" and np.any(np.abs(self.u_box[:, 0]) >= np.pi / 2):
            raise ValueError("Error : steering bounds must lie inside (-pi/2, pi/2)")

    @property
    def name(self) -> str:
        return self.definition.name

    @property
    def dim_x(self) -> int:
        return len(self.definition.state_names)

    @property
    def dim_u(self) -> int:
        return len(self.definition.control_names)

    @property
    def dim_d(self) -> int:
        return len(self.definition.disturbance_names)

    @property
    def state_names(self) -> tuple[str, ...]:
        return self.definition.state_names

    def flow(self, x, u, d=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        d = np.zeros(x.shape[:-1] + (self.dim_d,)) if d is None else np.asarray(d, dtype=float)
        return self.definition.flow(x, u, d, self.params)

    def euler(self, x, u, d=None, h: float = 0.1, backward: bool = False) -> np.ndarray:
        """One explicit Euler step of the flow (of -f when backward)."""
        sign = -1.0 if backward else 1.0
        return np.asarray(x, dtype=float) + sign * h * self.flow(x, u, d)

    def step_box(
        self,
        x_lo,
        x_hi,
        u_lo,
        u_hi,
        d_lo=None,
        d_hi=None,
        h: float = 0.1,
        backward: bool = False,
        include_euler: bool = True,
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Enclosure of the one-step successors of boxes.

        Parameters
        ----------
        x_lo, x_hi: np.ndarray
            State boxes, shape (k, n).
        u_lo, u_hi: np.ndarray
            Control boxes, shape (k, m) or (m,).
        d_lo, d_hi: np.ndarray
            Disturbance boxes, shape (k, p) or (p,); the full disturbance box when None.
        h: float
            Step in seconds.
        backward: bool
            Propagate the time-reversed flow -f.
        include_euler: bool
            Hull the remainder with 0 so the enclosure holds both the explicit Euler successor and the exact one.
            When False only the exact (zero-order hold) successor is enclosed.

        Returns
        -------
        The (lo, hi) successor boxes, shape (k, n).
        """
        x_lo, x_hi = np.atleast_2d(x_lo), np.atleast_2d(x_hi)
        k = x_lo.shape[0]
        u = (np.broadcast_to(u_lo, (k, self.dim_u)), np.broadcast_to(u_hi, (k, self.dim_u)))
        if d_lo is None:
            d_lo, d_hi = self.d_box[0], self.d_box[1]
        d = (np.broadcast_to(d_lo, (k, self.dim_d)), np.broadcast_to(d_hi, (k, self.dim_d)))
        f_lo, f_hi = self.definition.interval_flow((x_lo, x_hi), u, d, self.params)
        if backward:
            f_lo, f_hi = -f_hi, -f_lo
        r_lo, r_hi = self.definition.remainder((x_lo, x_hi), u, d, self.params, self)
        if include_euler:
            r_lo, r_hi = np.minimum(r_lo, 0.0), np.maximum(r_hi, 0.0)
        lo, hi = i_add(i_add((x_lo, x_hi), i_scale((f_lo, f_hi), h)), i_scale((r_lo, r_hi), h * h))
        return lo, hi

    def input_boxes(self, splits: int | list[int] = 1) -> list[tuple[np.ndarray, np.ndarray]]:
        """
        Partition of the control box into sub-boxes, `splits` pieces per control dimension.
        """
        splits = [splits] * self.dim_u if isinstance(splits, int) else list(splits)
        if len(splits) != self.dim_u or any(s < 1 for s in splits):
            raise ValueError(f"Error : input splits need {self.dim_u} positive entries, given : {splits}")
        edges = [np.linspace(self.u_box[0, i], self.u_box[1, i], s + 1) for i, s in enumerate(splits)]
        boxes = []
        for combo in itertools.product(*[range(s) for s in splits]):
            lo = np.array([edges[i][j] for i, j in enumerate(combo)])
            hi = np.array([edges[i][j + 1] for i, j in enumerate(combo)])
            boxes.append((lo, hi))
        return boxes

    def input_points(self, samples: int | list[int] = 3) -> np.ndarray:
        """Finite control sample set: a regular grid with `samples` points per dimension, corners included."""
        return _grid_points(self.u_box, samples)

    def disturbance_points(self, samples: int | list[int] = 3) -> np.ndarray:
        return _grid_points(self.d_box, samples)

    def unsafe_box(self) -> tuple[np.ndarray, np.ndarray] | None:
        """
        Collision region of the model as a box over the state space (unconstrained coordinates span the domain).
        """
        region = self.definition.unsafe_region(self.params)
        if region is None:
            return None
        lo, hi = self.x_box[0].copy(), self.x_box[1].copy()
        for name, (r_lo, r_hi) in region.items():
            i = self.state_names.index(name)
            lo[i], hi[i] = max(lo[i], r_lo), min(hi[i], r_hi)
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "model": self.name,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "u_box": self.u_box.tolist(),
            "d_box": self.d_box.tolist(),
            "x_box": self.x_box.tolist(),
        }

    @property
    def hash(self) -> str:
        return checksum(self.to_dict())


def _grid_points(box: np.ndarray, samples) -> np.ndarray:
    n = box.shape[1]
    if n == 0:
        return np.zeros((1, 0))
    samples = [samples] * n if isinstance(samples, int) else list(samples)
    if len(samples) != n or any(s < 1 for s in samples):
        raise ValueError(f"Error : samples need {n} positive entries, given : {samples}")
    axes = [
        np.linspace(box[0, i], box[1, i], s) if s > 1 else np.array([(box[0, i] + box[1, i]) / 2])
        for i, s in enumerate(samples)
    ]
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, n)
