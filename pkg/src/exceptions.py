class RescoreToolkitError(Exception):
    """Base class for every error raised by this package"""
    pass


class ShapeError(RescoreToolkitError, ValueError):
    """Input shapes are incompatible with an operation's shape rule"""
    pass


class GraphError(RescoreToolkitError):
    """Invalid use of a computation graph (non-scalar loss, second backward)"""
    pass


class DivergenceError(RescoreToolkitError):
    """A loss or gradient became non-finite"""
    pass


class TokenizerError(RescoreToolkitError, ValueError):
    pass


class ModelConfigError(RescoreToolkitError, ValueError):
    pass


class ModelInputError(RescoreToolkitError, ValueError):
    """Token ids out of range or a sequence longer than the model context"""
    pass


class CheckpointError(RescoreToolkitError):
    pass


class VocabularyMismatchError(RescoreToolkitError, ValueError):
    """Two models or corpora that must share a vocabulary do not"""
    pass


class RescoringError(RescoreToolkitError, ValueError):
    pass


class MetricError(RescoreToolkitError, ValueError):
    pass


class ConfigError(RescoreToolkitError, ValueError):
    pass
