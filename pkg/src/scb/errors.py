"""Shared exception hierarchy.

Every data-level failure raised by this package derives from ScbError so the
CLI can map it to exit code 2 (partial/failed data) while genuine bugs keep
propagating as exit code 3.
"""


class ScbError(Exception):
    """Base class for all expected, data-level failures."""
