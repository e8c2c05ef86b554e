"""Exception hierarchy. Each class maps to one CLI exit code."""


class BioprovinceError(Exception):
    exit_code = 1


class ConfigError(BioprovinceError, ValueError):
    exit_code = 2


class DataError(BioprovinceError, ValueError):
    exit_code = 3


class NumericalError(BioprovinceError, ArithmeticError):
    exit_code = 4
