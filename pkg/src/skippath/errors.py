"""Exception types shared across the package.

CLI exit-code mapping: ``InvalidInputError``, ``ConfigError`` and
``UnsupportedConfigError`` are validation failures (exit 1);
``PathDegeneracyError`` and ``TrainingDivergedError`` are numerical
failures (exit 2).
"""


class InvalidInputError(ValueError):
    """Malformed or non-finite input to a public operation."""


class ConfigError(ValueError):
    """Bad experiment configuration (unknown keys, missing values, ...)."""


class UnsupportedConfigError(ValueError):
    """A configuration the theory does not cover (e.g. d_y > min(d_x, d_z))."""


class PathDegeneracyError(RuntimeError):
    """Persistent rank deficiency along a path after perturbation retries."""


class TrainingDivergedError(RuntimeError):
    """Training loss blew up past the divergence threshold."""
