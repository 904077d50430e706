"""Exception types shared across the package."""


class FairmeterError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(FairmeterError):
    """An input file or record does not match the expected schema."""


class UnknownNameError(FairmeterError):
    """A group, source, metric, or class name is not known."""


class UndefinedScoreError(FairmeterError):
    """A score or comparison is mathematically undefined on the given data.

    Carries enough context (which quantity, which denominator or operand
    vanished) for skip-and-report accounting.
    """

    def __init__(self, kind: str, detail: str):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind} undefined: {detail}")


class EvaluationError(FairmeterError):
    """Metric evaluation cannot proceed (bad mode, group count, missing outputs)."""


class TemplateError(FairmeterError):
    """A template is malformed or incompatible with the supplied groups."""


class TagSequenceError(FairmeterError):
    """A gold tag sequence violates the BILOU scheme."""

    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at token {position})")
