"""Exception types shared across the package."""


class UnityStyleError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(UnityStyleError):
    """Invalid configuration: bad hyperparameters, layouts, or model specs."""


class DatasetError(UnityStyleError):
    """A dataset on disk is missing, empty, or inconsistent."""


class FilenameParseError(UnityStyleError, ValueError):
    """A re-ID filename does not follow the expected layout convention."""

    def __init__(self, name: str, token: str):
        self.name = name
        self.token = token
        super().__init__(f"cannot parse {token!r} in re-ID filename {name!r}")


class UnsupportedOperationError(UnityStyleError):
    """The operation is not available under the current model configuration."""


class MissingArtifactError(UnityStyleError):
    """A required upstream artifact (checkpoint, directory) is absent."""


class EvaluationError(UnityStyleError):
    """Evaluation cannot produce a report (e.g. no valid queries)."""
