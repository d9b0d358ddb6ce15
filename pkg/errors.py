"""
Exception hierarchy for the navigation pipeline.

Every error raised on purpose by the pipeline derives from SrgNavError so the
command line can map it to an exit code.
"""


class SrgNavError(Exception):
    """Base class for all pipeline errors"""


class ConfigError(SrgNavError, ValueError):
    """Invalid configuration value or config file"""


# Scene world

class SceneGenerationError(SrgNavError):
    """Scene generation failed after the bounded number of retries"""


class NoPathError(SrgNavError):
    """No traversable path between two cells"""


class TargetMissingError(SrgNavError, ValueError):
    """The scene holds no instance of the requested object category"""


class SceneFormatError(SrgNavError, ValueError):
    """A serialized scene could not be decoded"""


# GCN

class ShapeMismatchError(SrgNavError, ValueError):
    pass


class NonFiniteError(SrgNavError, ArithmeticError):
    def __init__(self, layer: int, message: str = ""):
        self.layer = layer
        super().__init__(message or f"non-finite activation in layer {layer}")


class DivergenceError(SrgNavError, ArithmeticError):
    def __init__(self, epoch: int, last_finite_loss: float):
        self.epoch = epoch
        self.last_finite_loss = last_finite_loss
        super().__init__(
            f"training diverged at epoch {epoch} (last finite loss {last_finite_loss!r})"
        )


class ZeroNormError(SrgNavError, ValueError):
    """Cosine similarity requested for a zero-norm vector"""


# Navigation and evaluation

class PolicyAssetError(SrgNavError, ValueError):
    """A policy is missing the SRG or embedding table it needs"""


class MetricsError(SrgNavError, ValueError):
    pass


# Artifacts

class ArtifactError(SrgNavError):
    """Base class for workspace artifact problems"""


class MissingDependencyError(ArtifactError):
    """A pipeline stage ran before the stage it depends on"""


class HashMismatchError(ArtifactError):
    """An artifact was built for a different category space"""


class MalformedFileError(ArtifactError, ValueError):
    """An artifact file could not be parsed"""
