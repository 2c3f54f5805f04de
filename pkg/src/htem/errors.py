"""Exception types raised across the package."""


class HtemError(Exception):
    """Base class."""


class DomainError(HtemError, ValueError):
    """A parameter lies outside the domain where a formula is defined."""


class MomentUndefined(DomainError):
    pass


class LambdaOutOfRange(DomainError):
    pass


class MissingC2(HtemError, ValueError):
    pass


class ConfigInvalid(HtemError, ValueError):
    pass


class DimensionMismatch(HtemError, ValueError):
    pass


class UnequalSampleCounts(HtemError, ValueError):
    pass


class TailBoundUnavailable(HtemError, ValueError):
    pass


class TrajectoryDiverged(HtemError, ArithmeticError):
    def __init__(self, trajectory: int, step: int):
        super().__init__(f"trajectory {trajectory} became non-finite at step {step}")
        self.trajectory = trajectory
        self.step = step


class BoundViolated(HtemError):
    def __init__(self, what: str, checkpoint, margin: float):
        super().__init__(f"{what} violated at checkpoint {checkpoint} (margin {margin:.3g})")
        self.what = what
        self.checkpoint = checkpoint
        self.margin = margin
