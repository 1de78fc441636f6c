"""Exception hierarchy shared across the package."""


class DegfError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(DegfError, ValueError):
    """Two vectors that must share a dimension do not."""


class DegenerateDistributionError(DegfError, ValueError):
    """An operation would leave no token with positive probability."""


class ConfigError(DegfError, ValueError):
    """Invalid configuration value or malformed scenario/config file."""


class ValidationError(DegfError, ValueError):
    """A client-side precondition failed before any request was sent."""


class ProtocolError(DegfError):
    """The adapter answered with a payload that violates the wire schema."""


class BackendUnavailableError(DegfError):
    """The model backend could not be reached after retries."""


class GeneratorUnavailableError(DegfError):
    """Image generation failed; carries the adapter-supplied reason."""


class SchemaError(DegfError):
    """A versioned file (trace, dataset, report) has the wrong schema tag."""


class EmptyInputError(DegfError):
    """A metric was asked to aggregate an empty record set."""


class MissingTruthError(DegfError):
    """Ground-truth objects are missing for one or more image ids."""

    def __init__(self, image_ids):
        self.image_ids = sorted(image_ids)
        super().__init__(f"missing ground truth for image ids: {self.image_ids}")


class MalformedSubsetError(DegfError):
    """A paired-question subset does not have exactly two records per image."""


class InsufficientDataError(DegfError):
    """Fewer data points than the statistic requires."""
