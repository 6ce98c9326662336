"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class FeatSearchError(Exception):
    exit_code = 1


class ConfigError(FeatSearchError, ValueError):
    exit_code = 2


class ValidationError(FeatSearchError, ValueError):
    exit_code = 3


class SchemaError(ValidationError):
    pass


class FormatError(ValidationError):
    """Binary artifact that is corrupt or does not match."""


class StalenessError(ValidationError):
    """Index was built from a different model or vocabulary."""


class NumericError(FeatSearchError, ArithmeticError):
    exit_code = 4


class TrainingError(NumericError):
    pass
