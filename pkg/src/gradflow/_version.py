"""Single source for the package version string."""

__version__ = "0.1.0"
