"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PairTranslateError(Exception):
    exit_code = 1


class ConfigError(PairTranslateError, ValueError):
    exit_code = 1


class DimensionError(PairTranslateError, ValueError):
    exit_code = 1


class GenerationError(PairTranslateError, RuntimeError):
    exit_code = 1


class IntegrityError(PairTranslateError, IOError):
    exit_code = 2


class NumericError(PairTranslateError, ArithmeticError):
    exit_code = 3
