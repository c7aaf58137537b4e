"""Exception taxonomy shared by every module.

The CLI maps each category to an exit code (config 2, data 3, numeric 4).
"""


class IINError(Exception):
    exit_code = 1


class ConfigError(IINError, ValueError):
    exit_code = 2


class DataError(IINError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InitError(DataError):
    pass


class TrainingError(DataError):
    pass


class NumericError(IINError, ArithmeticError):
    exit_code = 4


class MetricError(IINError, ValueError):
    exit_code = 3
