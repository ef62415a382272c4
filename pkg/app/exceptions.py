"""
Error hierarchy shared by the models, services and entry points.

Each error carries the exit code the CLI reports for it.
"""

from typing import Any, List, Optional


class DeceptionError(Exception):
    exit_code = 1


class ConfigError(DeceptionError):
    """Invalid scenario document or command-line option"""
    exit_code = 1


class PolicyHorizonError(DeceptionError):
    exit_code = 1


class BudgetExceededError(DeceptionError):
    exit_code = 1


class ControllerStateError(DeceptionError):
    exit_code = 1


class InfeasibleConstraintError(DeceptionError):
    """Some reachable state has every action masked out"""
    exit_code = 2

    def __init__(self, state: int, message: Optional[str] = None):
        self.state = state
        super().__init__(message or f"state {state} has no permissible action left")


class MdpValidationError(DeceptionError):
    exit_code = 3

    def __init__(self, report: List[Any]):
        self.report = list(report)
        preview = "; ".join(str(v) for v in self.report[:3])
        super().__init__(f"{len(self.report)} MDP violation(s): {preview}")


class ProductConstructionError(DeceptionError):
    exit_code = 3

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        preview = "; ".join(self.violations[:3])
        super().__init__(f"cannot build product MDP ({len(self.violations)} problem(s)): {preview}")


class KernelFamilyError(DeceptionError):
    exit_code = 3


class RewardFamilyError(DeceptionError):
    exit_code = 3
