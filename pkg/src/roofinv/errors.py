"""Error types shared across pipeline stages.

The CLI maps these onto exit codes: missing inputs exit 2, validation
failures exit 3, internal invariant breaches exit 4.
"""


class RoofInvError(Exception):
    """Base class for pipeline errors."""


class MissingInputError(RoofInvError):
    """A required input file or directory does not exist."""


class ValidationError(RoofInvError):
    """Input data violates its documented contract."""


class InvariantError(RoofInvError):
    """An internal consistency check failed; indicates a bug."""


class ModelFormatError(ValidationError):
    """A model file has an unsupported or corrupt format version."""
