"""Exception hierarchy shared by all modules.

Every error carries the exit code the command-line harness reports for it.
"""


class SynsaccError(Exception):
    """Base error for the toolkit"""

    exit_code = 1

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self):
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value!r}" for key, value in self.context.items())
        return f"{self.message} ({details})"


class ConfigError(SynsaccError, ValueError):
    """Invalid configuration or operation parameters"""

    exit_code = 2


class DataError(SynsaccError):
    """Malformed, missing or inconsistent data"""

    exit_code = 3


class DivergenceError(SynsaccError, ArithmeticError):
    """Training produced a non-finite loss"""

    exit_code = 4
