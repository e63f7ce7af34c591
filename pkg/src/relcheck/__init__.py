"""relcheck: configuration-issue detection for Python package releases."""

__version__ = "0.1.0"
