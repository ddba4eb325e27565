"""
Ego policies. A Policy wraps either a registered control law (WhiteBox), a control law plus a bounded unknown term
(GreyBox), or an opaque callable (BlackBox).

Control laws read an observation dict built by the simulator (keys: t, ego_x, ego_y, ego_heading, ego_v, gap,
lead_v, lane_offset, road_margin, pass_margin, follow_gap) and return the commands {"accel": ..., "steer": ...}.
White and grey box laws also provide the interval envelope of their acceleration over boxes of the longitudinal
formal state (gap, ego_v, lead_v), which a priori verification uses to narrow the control set.
"""

import importlib
from typing import Callable

import numpy as np

from .enums import PolicyKind
from .errors import PolicyKindError
from .utils import check_enum, check_finite, check_positive


class ControlLaw:
    """
    Base class of the control laws. Subclasses set `name` and `defaults` and implement control and envelope.
    """

    name = ""
    defaults: dict = {}

    def __init__(self, **params):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ValueError(f"Error : unknown parameters for control law {self.name}, given : {sorted(unknown)}")
        self.params = {**self.defaults, **params}
        for key, value in self.params.items():
            if value is not None:
                check_finite(value, f"{self.name}.{key}")

    def control(self, obs: dict) -> dict:
        raise NotImplementedError

    def envelope(self, lo: dict, hi: dict) -> tuple[np.ndarray, np.ndarray]:
        """
        Acceleration bounds over state boxes.

        Parameters
        ----------
        lo, hi: dict[str, np.ndarray]
            Lower and upper bounds of "gap", "ego_v" and "lead_v", arrays of shape (k,).

        Returns
        -------
        (a_lo, a_hi), arrays of shape (k,).
        """
        raise NotImplementedError

    def fallback(self, obs: dict) -> bool:
        """Whether the law is executing its declared emergency strategy."""
        return False


_LAWS: dict[str, type[ControlLaw]] = {}


def register_law(cls: type[ControlLaw]) -> type[ControlLaw]:
    _LAWS[cls.name] = cls
    return cls


def get_law(name: str, **params) -> ControlLaw:
    try:
        return _LAWS[name](**params)
    except KeyError:
        raise ValueError(f"Unknown control law '{name}', available : {law_names()}") from None


def law_names() -> list[str]:
    return sorted(_LAWS)


def _const(value: float, like: np.ndarray) -> np.ndarray:
    return np.full(np.shape(like), float(value))


@register_law
class Zero(ControlLaw):
    name = "zero"

    def control(self, obs):
        return {"accel": 0.0, "steer": 0.0}

    def envelope(self, lo, hi):
        return _const(0.0, lo["ego_v"]), _const(0.0, lo["ego_v"])


@register_law
class Cruise(ControlLaw):
    """Proportional speed tracking a = gain * (v_target - v)."""

    name = "cruise"
    defaults = {"v_target": 10.0, "gain": 1.0}

    def control(self, obs):
        return {"accel": self.params["gain"] * (self.params["v_target"] - obs["ego_v"]), "steer": 0.0}

    def envelope(self, lo, hi):
        gain, target = self.params["gain"], self.params["v_target"]
        bounds = np.stack([gain * (target - hi["ego_v"]), gain * (target - lo["ego_v"])])
        return bounds.min(axis=0), bounds.max(axis=0)


def _brake_envelope(lo: dict, hi: dict, a_max: float) -> tuple[np.ndarray, np.ndarray]:
    # -a_max while moving forward, 0 once stopped
    v_lo, v_hi = lo["ego_v"], hi["ego_v"]
    a_lo = np.where(v_hi > 0, -a_max, 0.0)
    a_hi = np.where(v_lo > 0, -a_max, 0.0)
    return a_lo, a_hi


@register_law
class FullBrake(ControlLaw):
    """
    Maximal braking until standstill. This is the premeditated emergency strategy: the fallback flag is raised
    while it brakes.
    """

    name = "full_brake"
    defaults = {"a_max": 5.0}

    def __init__(self, **params):
        super().__init__(**params)
        check_positive(self.params["a_max"], "full_brake.a_max")

    def control(self, obs):
        return {"accel": -self.params["a_max"] if obs["ego_v"] > 0 else 0.0, "steer": 0.0}

    def envelope(self, lo, hi):
        return _brake_envelope(lo, hi, self.params["a_max"])

    def fallback(self, obs):
        return obs["ego_v"] > 0


@register_law
class ThresholdBrake(ControlLaw):
    """
    Keeps the acceleration `accel` until the braking distance to the lead vehicle plus `margin` reaches the gap,
    then brakes at a_max.
    """

    name = "threshold_brake"
    defaults = {"a_max": 5.0, "margin": 0.5, "accel": 0.0}

    def __init__(self, **params):
        super().__init__(**params)
        check_positive(self.params["a_max"], "threshold_brake.a_max")

    def _trigger(self, gap, closing):
        return gap - max(closing, 0.0) ** 2 / (2 * self.params["a_max"]) - self.params["margin"]

    def _braking(self, obs) -> bool:
        return self._trigger(obs["gap"], obs["ego_v"] - obs["lead_v"]) <= 0

    def control(self, obs):
        if self._braking(obs):
            return {"accel": -self.params["a_max"] if obs["ego_v"] > 0 else 0.0, "steer": 0.0}
        return {"accel": self.params["accel"], "steer": 0.0}

    def fallback(self, obs):
        return self._braking(obs) and obs["ego_v"] > 0

    def envelope(self, lo, hi):
        a_max, margin = self.params["a_max"], self.params["margin"]
        closing_lo = np.maximum(lo["ego_v"] - hi["lead_v"], 0.0)
        closing_hi = np.maximum(hi["ego_v"] - lo["lead_v"], 0.0)
        can_brake = lo["gap"] - closing_hi**2 / (2 * a_max) - margin <= 0
        must_brake = hi["gap"] - closing_lo**2 / (2 * a_max) - margin <= 0
        brake_lo, brake_hi = _brake_envelope(lo, hi, a_max)
        idle = _const(self.params["accel"], lo["gap"])
        a_lo = np.where(must_brake, brake_lo, np.where(can_brake, np.minimum(brake_lo, idle), idle))
        a_hi = np.where(must_brake, brake_hi, np.where(can_brake, np.maximum(brake_hi, idle), idle))
        return a_lo, a_hi


@register_law
class LaneKeep(ControlLaw):
    """Steers back to the lane center (bicycle ego) while tracking v_target when given."""

    name = "lane_keep"
    defaults = {"k_offset": 0.3, "k_heading": 1.0, "v_target": None, "gain": 0.5, "max_steer": 0.5}

    def _accel(self, v):
        if self.params["v_target"] is None:
            return 0.0
        return self.params["gain"] * (self.params["v_target"] - v)

    def _steer(self, offset, heading):
        steer = -self.params["k_offset"] * offset - self.params["k_heading"] * heading
        return float(np.clip(steer, -self.params["max_steer"], self.params["max_steer"]))

    def control(self, obs):
        return {"accel": self._accel(obs["ego_v"]), "steer": self._steer(obs["lane_offset"], obs["ego_heading"])}

    def envelope(self, lo, hi):
        if self.params["v_target"] is None:
            return _const(0.0, lo["ego_v"]), _const(0.0, lo["ego_v"])
        gain, target = self.params["gain"], self.params["v_target"]
        return gain * (target - hi["ego_v"]), gain * (target - lo["ego_v"])


@register_law
class Overtake(LaneKeep):
    """
    Passes a slower vehicle ahead: moves to the adjacent lane when the follow gap drops below `trigger_gap`, and
    returns to the original lane once the pass margin exceeds `clearance`.
    """

    name = "overtake"
    defaults = {
        "k_offset": 0.3,
        "k_heading": 1.0,
        "v_target": 15.0,
        "gain": 0.5,
        "max_steer": 0.5,
        "lane_width": 3.5,
        "trigger_gap": 20.0,
        "clearance": 5.0,
    }

    def control(self, obs):
        passing = obs["follow_gap"] < self.params["trigger_gap"] and obs["pass_margin"] < self.params["clearance"]
        target = self.params["lane_width"] if passing else 0.0
        steer = self._steer(obs["lane_offset"] - target, obs["ego_heading"])
        return {"accel": self._accel(obs["ego_v"]), "steer": steer}


def _load_function(function: Callable | str) -> Callable:
    if callable(function):
        return function
    if isinstance(function, str) and ":" in function:
        module_name, _, attr = function.partition(":")
        try:
            return getattr(importlib.import_module(module_name), attr)
        except (ImportError, AttributeError) as e:
            raise ValueError(f"Error : cannot load black-box policy '{function}' ({e})") from None
    raise ValueError(f"Error : black-box policy needs a callable or 'module:function', given : {function}")


class Policy:
    """
    An ego policy.

    Parameters
    ----------
    name: str
        Identifier written into reports.
    kind: PolicyKind | str
        WhiteBox, GreyBox or BlackBox.
    law: str
        Registered control law (WhiteBox, GreyBox).
    params: dict
        Control law parameters.
    bounded_term: tuple[float, float]
        GreyBox only: bounds of the unknown additive acceleration term. Simulation draws it uniformly per step from
        a generator seeded with `seed`.
    function: Callable | str
        BlackBox only: obs -> {"accel": ..., "steer": ...} (or a bare acceleration), or "module:function".
    seed: int
        Seed of the internal randomness (GreyBox term).
    """

    def __init__(
        self,
        name: str,
        kind: PolicyKind | str = PolicyKind.WhiteBox,
        law: str = None,
        params: dict = None,
        bounded_term: tuple[float, float] = None,
        function: Callable | str = None,
        seed: int = 0,
    ):
        if not isinstance(name, str) or not name:
            raise ValueError("Error : a policy needs a non-empty name")
        self.name = name
        self.kind = check_enum(kind, PolicyKind, "policy kind")
        self.params = dict(params or {})
        self.seed = seed
        self.law = None
        self.function = None
        self.bounded_term = None
        if self.kind == PolicyKind.BlackBox:
            self.function = _load_function(function)
        else:
            if law is None:
                raise ValueError(f"Error : {self.kind.value} policy {name} needs a control law")
            self.law = get_law(law, **self.params)
        if self.kind == PolicyKind.GreyBox:
            if bounded_term is None:
                raise ValueError(f"Error : GreyBox policy {name} needs a bounded term")
            lo, hi = (float(v) for v in bounded_term)
            if lo > hi:
                raise ValueError(f"Error : bounded term needs lower <= upper, given : [{lo}, {hi}]")
            self.bounded_term = (lo, hi)
        self._rng = np.random.default_rng(seed)

    def reset(self, seed: int = None):
        """Restart the internal randomness (called at the start of every episode)."""
        self._rng = np.random.default_rng(self.seed if seed is None else seed)

    def control(self, obs: dict) -> dict:
        if self.kind == PolicyKind.BlackBox:
            out = self.function(dict(obs))
            if not isinstance(out, dict):
                out = {"accel": float(out)}
            return {"accel": float(out.get("accel", 0.0)), "steer": float(out.get("steer", 0.0))}
        command = dict(self.law.control(obs))
        if self.bounded_term is not None:
            command["accel"] += self._rng.uniform(*self.bounded_term)
        return command

    def fallback(self, obs: dict) -> bool:
        if self.law is None:
            return False
        return bool(self.law.fallback(obs))

    @property
    def admits_set_propagation(self) -> bool:
        return self.kind != PolicyKind.BlackBox

    def envelope(self, lo: dict, hi: dict) -> tuple[np.ndarray, np.ndarray]:
        """
        Acceleration bounds of the policy over boxes of the longitudinal state (see ControlLaw.envelope).

        Raises
        ------
        PolicyKindError
            For BlackBox policies, which admit a posteriori verification only.
        """
        if not self.admits_set_propagation:
            raise PolicyKindError(
                f"Policy {self.name} is BlackBox: set propagation needs a WhiteBox or GreyBox policy, "
                f"use a posteriori (sample based) verification instead"
            )
        a_lo, a_hi = self.law.envelope(lo, hi)
        if self.bounded_term is not None:
            a_lo, a_hi = a_lo + self.bounded_term[0], a_hi + self.bounded_term[1]
        return np.asarray(a_lo, dtype=float), np.asarray(a_hi, dtype=float)

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind.value}
        if self.law is not None:
            out["law"] = self.law.name
            out["params"] = {k: self.law.params[k] for k in sorted(self.law.params)}
        if self.bounded_term is not None:
            out["bounded_term"] = list(self.bounded_term)
        if self.function is not None:
            out["function"] = getattr(self.function, "__qualname__", repr(self.function))
        out["seed"] = self.seed
        return out
