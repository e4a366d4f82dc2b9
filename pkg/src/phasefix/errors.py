"""Exception types shared across the phasefix package."""


class PhasefixError(Exception):
    """Base class for all phasefix errors."""


class InfeasibleDeployment(PhasefixError):
    """AP placement could not satisfy the separation constraint within the attempt budget."""


class DegeneratePosition(PhasefixError):
    """UE position coincides (within the guard distance) with an AP."""


class DegenerateDistance(PhasefixError):
    """Propagation distance too small for the path-loss model."""


class DimensionMismatch(PhasefixError):
    """Vector lengths disagree with the deployment or model."""


class LabelOutOfRange(PhasefixError):
    """An ambiguity label falls outside a branch's class range."""


class ConfigMismatch(PhasefixError):
    """Dataset and model configurations are incompatible."""


class SchemaError(PhasefixError):
    """A file does not match the expected schema."""


class VersionMismatch(PhasefixError):
    """A file carries an unsupported format version."""


class InvalidCount(PhasefixError):
    """A requested count is out of range."""


class LengthMismatch(PhasefixError):
    """Paired sequences have different lengths."""


class EmptyInput(PhasefixError):
    """A metric was requested over an empty collection."""


class SingularPoint(PhasefixError):
    """Cost/gradient evaluated within the singularity guard of an AP."""


class MissingModel(PhasefixError):
    """No trained model is available for the requested configuration."""


class MissingArtifact(PhasefixError):
    """A required input file is absent."""


class ConfigParseError(PhasefixError):
    """A run configuration file failed to parse or validate."""
