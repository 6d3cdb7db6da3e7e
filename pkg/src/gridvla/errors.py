"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (grid size, object count, model dims, weights)."""


class UnsatisfiableConfigError(ConfigError):
    """Configuration that cannot produce any training sample."""


class IntegrityError(ValueError):
    """Internal reference broken: dangling object id, malformed boundary list."""


class PlanningError(RuntimeError):
    """The solver cannot produce a plan for the given task/state."""


class SegmentationError(ValueError):
    """Trajectory does not contain the grasp/release structure segmentation needs."""


class VocabularyError(ValueError):
    """Words outside the closed vocabulary."""

    def __init__(self, words):
        self.words = tuple(words)
        super().__init__(f"unknown words: {', '.join(self.words)}")


class ThoughtParseError(ValueError):
    """Malformed thought string; carries the token position of the failure."""

    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} (at token {position})")


class AnnotationMissingError(ValueError):
    """A thought-conditioned sample was requested for a step without a thought."""


class CheckpointError(ValueError):
    """Checkpoint refused: format version or vocabulary hash mismatch."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the last good checkpoint is retained on disk."""
