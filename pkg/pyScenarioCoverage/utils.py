"""
Shared helpers: argument validation, the show_log switch used by every long-running object, and the CRC based
provenance hash written into every output file.
"""

import json
import logging
import math
import numbers
from enum import Enum

import crccheck


LOGGER = logging.getLogger("pyScenarioCoverage")


def check_show_log(show_log: bool | str):
    """
    Checks the show_log switch.

    Parameters
    ----------
    show_log: bool | str
        True (full log), "Status" (status lines only) or False (warnings only).
    """
    if show_log is not True and show_log is not False and show_log != "Status":
        raise ValueError("show_log must be True, False, or 'Status'.")


def set_show_log(show_log: bool | str = False):
    """
    Map the show_log switch onto the package logger level and make sure something prints it.

    Parameters
    ----------
    show_log: bool | str
        If True, all logs will be printed.
        If "Status", only status logs will be printed.
        If False, only warnings will be printed.
    """
    check_show_log(show_log)
    if show_log is True:
        LOGGER.setLevel(logging.DEBUG)
    elif show_log == "Status":
        LOGGER.setLevel(logging.INFO)
    else:
        LOGGER.setLevel(logging.WARNING)
    if not LOGGER.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        LOGGER.addHandler(handler)


def log(status_msg: str, full_msg: str = None):
    """
    Log messages based on the show_log mode.

    Parameters
    ----------
    status_msg: str
        The message to show when show_log is "Status" or True.
    full_msg: str
        The additional message to show when show_log is True.
    """
    if full_msg:
        LOGGER.debug(full_msg)
    LOGGER.info(status_msg)


def check_finite(value: float, name: str):
    if value is None or isinstance(value, bool) or not isinstance(value, numbers.Real) or not math.isfinite(value):
        raise ValueError(f"Error : {name} must be a finite real, given : {value}")


def check_positive(value: float, name: str):
    """
    Checks that a value is a finite, strictly positive real.

    Parameters
    ----------
    value: float
        Value to check. If not positive, raise a ValueError.
    name: str
        Name used in the error message.
    """
    check_finite(value, name)
    if value <= 0:
        raise ValueError(f"Error : {name} must be > 0, given : {value}")


def check_nonnegative(value: float, name: str):
    check_finite(value, name)
    if value < 0:
        raise ValueError(f"Error : {name} must be >= 0, given : {value}")


def check_bounds(lower, upper, name: str, strict: bool = True):
    """
    Checks a pair of bounds (scalars or equal-length sequences).

    Parameters
    ----------
    lower, upper: float | list[float]
        Bounds to check. Every entry must be finite and lower < upper (lower <= upper if not strict).
    name: str
        Name used in the error message.
    strict: bool
        Whether lower == upper is rejected.
    """
    lows = list(lower) if isinstance(lower, (list, tuple)) else [lower]
    ups = list(upper) if isinstance(upper, (list, tuple)) else [upper]
    if len(lows) != len(ups):
        raise ValueError(f"Error : {name} bounds have different lengths, given : {len(lows)} and {len(ups)}")
    for lo, up in zip(lows, ups):
        check_finite(lo, f"{name} lower bound")
        check_finite(up, f"{name} upper bound")
        if lo > up or (strict and lo == up):
            raise ValueError(f"Error : {name} needs lower {'<' if strict else '<='} upper, given : [{lo}, {up}]")


def check_enum(value, enum_class: type[Enum], name: str) -> Enum:
    """
    Accept either an enum member or its value / name as a string, and return the member.

    Parameters
    ----------
    value: str | Enum
        Value to convert.
    enum_class: type[Enum]
        Target enum.
    name: str
        Name used in the error message.

    Returns
    -------
    The enum member.
    """
    if isinstance(value, enum_class):
        return value
    if isinstance(value, str):
        for member in enum_class:
            if value == member.value or value.lower() == member.name.lower():
                return member
        valid = ", ".join(str(m.value) for m in enum_class)
        raise ValueError(f"{name} must be one of the following: {valid}, given : {value}")
    raise TypeError(f"{name} must be a string or a {enum_class.__name__} enum instance")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(obj):
    if isinstance(obj, Enum):
        return obj.value
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def checksum(obj) -> str:
    """
    CRC-32 of the canonical JSON dump of obj, used as provenance hash in every output file.

    Parameters
    ----------
    obj: Any
        JSON-serializable object (enums and numpy arrays are accepted).

    Returns
    -------
    The hash formatted as "0x%08x".
    """
    return "0x%08x" % crccheck.crc.Crc32.calc(canonical_json(obj).encode("utf-8"))
