"""
Exception hierarchy for the workbench
Each error carries the CLI exit code it maps to
"""

from typing import Optional


class WorkbenchError(Exception):
    """Base class for every error raised by the library"""

    exit_code = 2


class InvalidParameterError(WorkbenchError, ValueError):
    """Parameters outside the validated domain of an operation"""

    exit_code = 1


class NumericalFailureError(WorkbenchError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result"""

    exit_code = 2


class BranchViolationError(NumericalFailureError):
    """The linear-branch curve left its branch on the evaluation grid"""

    def __init__(self, theta: float, overshoot: float, message: Optional[str] = None):
        self.theta = theta
        self.overshoot = overshoot
        super().__init__(
            message or f"curve leaves the linear branch at theta={theta:.17g} by {overshoot:.3e}"
        )


class DegenerateForcingError(NumericalFailureError):
    """The relevant extremum of the curve shape vanishes, so b* is infinite"""


class BracketFailureError(NumericalFailureError):
    """Bisection could not find a sign change"""


class UnexpectedZeroError(NumericalFailureError):
    """A gap function vanished away from its predicted zeros"""

    def __init__(self, theta: float, value: float):
        self.theta = theta
        self.value = value
        super().__init__(f"unexpected zero at theta={theta:.17g} (value {value:.3e})")


class ExportError(WorkbenchError, OSError):
    """Output files could not be written"""

    exit_code = 3
