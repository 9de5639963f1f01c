"""Exception hierarchy shared across the workbench."""


class ProsobenchError(Exception):
    """Base class for domain errors; CLI maps these to exit code 1."""


class ContractViolation(ProsobenchError):
    """An operation was called with arguments outside its contract."""


class UnsupportedFormatError(ProsobenchError):
    """Audio file exists but is not 16-bit PCM mono WAV."""


class InsufficientVoicingError(ProsobenchError):
    """Too few voiced frames to compute a pitch-based feature."""


class AllSilentError(ProsobenchError):
    """Utterance contains no non-silent frames."""


class EmptyAlignmentError(ProsobenchError):
    """Alignment has no phones left after exclusions."""


class AlignmentParseError(ProsobenchError):
    """Malformed or ill-ordered alignment file; message carries the line number."""


class DegenerateFeatureError(ProsobenchError):
    """A feature has zero variance across the corpus; stats cannot be fitted."""


class FeatureExtractionError(ProsobenchError):
    """Wraps a component failure with the name of the feature being computed."""

    def __init__(self, feature: str, cause: Exception):
        super().__init__(f"failed to compute feature '{feature}': {cause}")
        self.feature = feature
        self.cause = cause


class TrainingDivergedError(ProsobenchError):
    """Loss became non-finite; message carries the step number."""


class CheckpointError(ProsobenchError):
    """Checkpoint file is corrupt, truncated, or has a mismatched version/config."""


class EvaluationError(ProsobenchError):
    """Bias-sweep evaluation failed (e.g. too many unmeasurable utterances)."""
