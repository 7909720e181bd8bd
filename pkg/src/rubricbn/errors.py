"""Exception types shared across the package."""


class RubricBnError(Exception):
    """Base class for all package errors."""


class StructureError(RubricBnError):
    """A network, factor or CPT is structurally ill-formed."""


class ParameterError(RubricBnError):
    """A numeric parameter is out of its admissible range."""


class DataError(RubricBnError):
    """Input data (answer logs, rubric files, CSV rows) is invalid."""


class InconsistentEvidenceError(RubricBnError):
    """The observed evidence has probability zero under the model."""
