"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input (code, ensemble, configuration, CLI argument) violates its contract."""


class ConvergenceError(RuntimeError):
    """A numerical routine failed to converge or to meet its error target."""


class BracketError(ConvergenceError):
    """A root/threshold search could not establish a sign-change bracket."""
