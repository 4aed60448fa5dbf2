"""
Exception types shared across the package.

Validation problems are reported with plain ValueError, the same way the
dataclasses and parsers in this package do it. The classes below cover the
failures that the command line maps to dedicated exit codes.
"""


class ConfigError(ValueError):
    """An experiment file could not be parsed."""


class NumericalError(ArithmeticError):
    """Divergent far field, singular or non-convergent solve, failed search."""


class PropertyViolation(AssertionError):
    """A checked identity or inequality failed beyond its tolerance."""


EXIT_PARSE_ERROR = 1
EXIT_VALIDATION_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_PROPERTY_VIOLATION = 4
EXIT_FATAL = 1


def exit_code_for(error: BaseException) -> int:
    """
    Map an exception to the command line exit code.

    Args:
        error: The exception raised while running a command

    Returns:
        int: Exit code (1 parse, 2 validation, 3 numerical, 4 property violation)
    """
    if isinstance(error, ConfigError):
        return EXIT_PARSE_ERROR
    if isinstance(error, PropertyViolation):
        return EXIT_PROPERTY_VIOLATION
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL_FAILURE
    if isinstance(error, ValueError):
        return EXIT_VALIDATION_ERROR
    return EXIT_FATAL
