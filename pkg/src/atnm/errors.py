"""Exception hierarchy shared across the package.

The CLI maps these to exit codes: config problems exit 1, data/format
problems exit 2, aborted training runs exit 3.
"""


class AtnmError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(AtnmError):
    """Shapes or sizes do not line up."""


class ConfigError(AtnmError):
    """Invalid configuration value or combination."""


class FormatError(AtnmError):
    """Malformed file content (container, checkpoint, manifest)."""


class TrainingError(AtnmError):
    """Training aborted (non-finite loss or gradient)."""


class EmptyMaskError(AtnmError):
    """Loss requested for an example with no known labels."""
