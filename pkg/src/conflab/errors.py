"""Exception hierarchy. Exit codes: 2 validation, 3 numeric, 4 resource."""


class ConflabError(Exception):
    """Base class for all conflab errors."""

    exit_code = 1


class InputError(ConflabError):
    """Invalid inputs: dimension mismatches, malformed specs, bad parameters."""

    exit_code = 2


class GeometryError(InputError):
    """Geometrically ill-posed request (e.g. midpoint of antipodal points)."""


class FormatError(InputError):
    """Malformed on-disk artifact (grid manifest, payload, matrix file)."""


class NumericError(ConflabError):
    """Solver non-convergence, failed bracket, hypothesis violation."""

    exit_code = 3


class IntegrationError(NumericError):
    """Quadrature produced too many non-finite samples."""


class SamplingError(NumericError):
    """Not enough valid samples to form an estimate."""


class ResourceError(ConflabError):
    """Configured budget (points, memory, rejection efficiency) exceeded."""

    exit_code = 4
