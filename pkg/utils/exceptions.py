from typing import Optional


class CurtainError(Exception):
    """Base class for all light curtain planning errors"""
    pass


class DomainError(CurtainError):
    """Raised when a value falls outside the domain of a geometric or probabilistic function"""
    pass


class ArgumentError(CurtainError):
    """Raised when operation arguments are inconsistent with each other"""
    pass


class ConfigurationError(CurtainError):
    """Raised when a sensor configuration or strategy selector cannot be used"""
    pass


class InstanceTooLargeError(CurtainError):
    """Raised when an exhaustive enumeration would exceed its size guard"""
    pass


class SceneGenerationError(CurtainError):
    """Raised when a random scene cannot be placed without overlap"""
    pass


class PlanningError(CurtainError):
    """Raised when no feasible curtain exists or a planner reaches a dead end"""

    def __init__(self, message: str, ray_index: Optional[int] = None, step: Optional[int] = None):
        super().__init__(message)
        self.ray_index = ray_index
        self.step = step

    def with_step(self, step: int) -> "PlanningError":
        """
        Copy of this error tagged with the episode step that raised it
        """
        return PlanningError(f"step {step}: {self}", ray_index=self.ray_index, step=step)
