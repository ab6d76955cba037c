"""Exception hierarchy shared by all modules.

Every error carries a short machine-friendly ``code`` so the CLI can map
failures to exit statuses without string matching.
"""


class ICCError(Exception):
    code = "icc_error"


class SchemaError(ICCError):
    code = "schema"


class ParseError(ICCError):
    code = "parse"

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ContrastError(ICCError):
    code = "invalid_contrast"


class DomainError(ICCError):
    code = "domain"


class SpecError(ICCError):
    code = "spec"


class DimensionError(ICCError):
    code = "dimension"


class SingularityError(ICCError):
    code = "singular"


class RelevanceError(SingularityError):
    """Instruments carry no variation left over after partialling out projected proxies."""

    code = "relevance"


class IdentificationError(ICCError):
    code = "identification"


class SupportError(ICCError):
    code = "support"


class CommonSupportError(SupportError):
    code = "common_support"


class CellSupportError(SupportError):
    code = "cell_support"


class CellSizeError(SupportError):
    code = "cell_size"


class BinningError(ICCError):
    code = "binning"


class NoPerturbationError(ICCError):
    code = "no_perturbation"


class OverparameterizationError(ICCError):
    code = "overparameterized"


class ConfigError(ICCError):
    code = "config"

    def __init__(self, message, path=None):
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
