"""Exception hierarchy shared by all reslat modules."""


class ReslatError(Exception):
    """Base class for every error raised by the library."""

    #: short machine-readable reason, copied into CLI reports
    reason = "error"


class SystemSpecError(ReslatError, ValueError):
    reason = "system_spec"


class IntegrationError(ReslatError):
    reason = "integration"


class SingularityError(IntegrationError):
    reason = "singularity"


class ReturnMapError(ReslatError):
    reason = "return_map"


class ShootingError(ReslatError):
    reason = "shooting"


class ContinuationError(ReslatError):
    reason = "continuation"

    def __init__(self, message, energy=None):
        super().__init__(message)
        self.energy = energy


class FloquetError(ReslatError):
    reason = "floquet"


class HypothesisError(ReslatError):
    reason = "hypothesis"


class ActionModelError(ReslatError):
    reason = "action_model"


class NodeHypothesisError(ActionModelError, HypothesisError):
    """A family node violates a hypothesis required by the action model."""

    reason = "hypothesis"


class ValidityError(ReslatError, ValueError):
    """Complex energy outside the region where the action fits are trusted."""

    reason = "validity"


class QuantizationError(ReslatError):
    reason = "quantization"


class LatticeMismatch(ReslatError):
    reason = "lattice_mismatch"


class ConfigError(ReslatError):
    reason = "config"
