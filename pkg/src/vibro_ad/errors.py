"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can print
``<CODE>: message`` lines and pick an exit status.
"""


class VibroError(Exception):
    code = "ERROR"
    # 1 = runtime failure, 2 = configuration / validation failure
    exit_status = 1


class ValidationError(VibroError):
    code = "INVALID"
    exit_status = 2


class InvalidSignal(ValidationError):
    code = "INVALID_SIGNAL"


class InvalidBand(ValidationError):
    code = "INVALID_BAND"


class DegenerateSignal(VibroError):
    code = "DEGENERATE_SIGNAL"


class InvalidSpec(ValidationError):
    code = "INVALID_SPEC"


class InvalidConfig(ValidationError):
    code = "INVALID_CONFIG"


class InsufficientData(VibroError):
    code = "INSUFFICIENT_DATA"


class SingularCovariance(VibroError):
    code = "SINGULAR_COVARIANCE"


class DegenerateGeometry(VibroError):
    code = "DEGENERATE_GEOMETRY"


class InvalidContamination(ValidationError):
    code = "INVALID_CONTAMINATION"


class EmptyEnsemble(ValidationError):
    code = "EMPTY_ENSEMBLE"


class WrongAlgorithm(ValidationError):
    code = "WRONG_ALGORITHM"


class IncomparableRankings(ValidationError):
    code = "INCOMPARABLE_RANKINGS"


class NoSpecificFeatures(VibroError):
    code = "NO_SPECIFIC_FEATURES"


class InvalidMode(ValidationError):
    code = "INVALID_MODE"


class NoInputs(ValidationError):
    code = "NO_INPUTS"


class FormatError(ValidationError):
    code = "BAD_FORMAT"
