"""Exception taxonomy, aligned with the CLI exit codes (see cli.py)."""


class BugsweepError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(BugsweepError):
    """Invalid scenario/configuration input (CLI exit code 2)."""


class InsufficientActivityError(BugsweepError):
    """Ground truth lacks the activity a detection phase requires (exit 3)."""


class InputMismatchError(BugsweepError):
    """Malformed input files or traces/ground-truth that do not belong
    together (exit 4)."""


class InsufficientDataError(BugsweepError):
    """A series is too short for the requested statistical test."""
