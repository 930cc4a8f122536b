"""Typed errors raised across the package."""


class YawcnpError(Exception):
    """Base class for all package errors."""


class InvalidRegimeError(YawcnpError, ValueError):
    """Inputs left the physical validity region of a model (e.g. a lifting axle)."""


class SingularVelocityError(YawcnpError, ValueError):
    """A model equation was evaluated below its minimum valid speed."""


class TrajectoryDivergedError(YawcnpError, RuntimeError):
    """A simulated state grew beyond plausible magnitudes."""

    def __init__(self, scenario_id: str, step: int):
        super().__init__(f"trajectory diverged in scenario {scenario_id!r} at step {step}")
        self.scenario_id = scenario_id
        self.step = step


class TooShortSeriesError(YawcnpError, ValueError):
    """A time series is too short to split into context and targets."""


class EmptyContextError(YawcnpError, ValueError):
    """A prediction was requested without any conditioning observations."""


class DimensionMismatchError(YawcnpError, ValueError):
    """Array shapes do not chain through the network."""


class ManifestError(YawcnpError, ValueError):
    """A dataset manifest line could not be parsed."""


class ChannelCountError(YawcnpError, ValueError):
    """A task CSV does not carry the expected five channels."""


class TrainingDivergedError(YawcnpError, RuntimeError):
    """The training loss became non-finite."""
