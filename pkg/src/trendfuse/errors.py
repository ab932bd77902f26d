"""Exception hierarchy shared across the package.

Data-shaped problems (bad files, bad values) derive from DataError so the
CLI can map them to one exit code; config and contract violations stay
separate because they indicate caller bugs, not bad inputs.
"""


class ShapeError(ValueError):
    """Tensor operands have incompatible shapes."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class GraphError(RuntimeError):
    """A node is not part of the computation graph being differentiated."""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class DataError(ValueError):
    """Base for problems with user-supplied data files."""


class ParseError(DataError):
    """Unparseable field; message carries the 1-based line number."""


class SchemaError(DataError):
    """File lacks a required column or field."""


class DegenerateInputError(DataError):
    """Input has no usable spread (constant sequence, zero variance)."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; message names epoch and batch."""


class ProviderError(RuntimeError):
    """A summary provider failed; `__cause__` carries the original error."""
