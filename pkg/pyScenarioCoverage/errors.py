"""
Exceptions raised by pyScenarioCoverage. Every class derives from the builtin exception a caller would already
catch (ValueError, TypeError or RuntimeError), so plain `except ValueError` keeps working.
"""


class ConfigError(ValueError):
    """
    Invalid campaign configuration.

    Attributes
    ----------
    field: str
        Dotted path of the offending field, e.g. "scenario_space.continuous[0].upper".
    line: int | None
        1-based line in the config file, when known.
    """

    def __init__(self, message: str, field: str = None, line: int = None):
        self.message = message
        self.field = field
        self.line = line
        location = ""
        if field:
            location += f" (field: {field}"
            location += f", line {line})" if line is not None else ")"
        super().__init__(f"{message}{location}")


class StlParseError(ValueError):
    def __init__(self, message: str, position: int = None):
        self.position = position
        suffix = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{suffix}")


class UnknownPredicateError(StlParseError):
    pass


class IntervalError(StlParseError):
    pass


class SignalDomainError(ValueError):
    pass


class VacuousWindowError(ValueError):
    pass


class BindingError(ValueError):
    pass


class PolicyKindError(TypeError):
    pass


class LedgerModeError(TypeError):
    pass


class LedgerMismatchError(ValueError):
    pass


class EngineError(RuntimeError):
    pass
