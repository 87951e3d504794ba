import typing as t


class EsdpError(Exception):
    condition: t.Optional[str]
    """
    If an exception was raised while evaluating a security condition, this
    attribute will contain the condition name (eg. ``abort``).
    """

    def __init__(self, *args, condition: t.Optional[str] = None):
        super().__init__(*args)
        self.condition = condition

    def __str__(self):
        message = super().__str__()
        if self.condition:
            return f'{self.condition}: {message}'
        return message


class ValidationError(EsdpError):
    errors: list[str]
    """One message per violated invariant, prefixed by the field name."""

    def __init__(self, *errors: str, condition: t.Optional[str] = None):
        super().__init__('; '.join(errors), condition=condition)
        self.errors = list(errors)


class ParseError(EsdpError):
    def __init__(self, message: str, line: t.Optional[int] = None):
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line


class UnsupportedModelError(EsdpError):
    pass


class StructureError(EsdpError):
    pass
