"""Speech cognition bench: HC/MCI/AD screening pipelines over spontaneous speech."""

__version__ = "0.1.0"
