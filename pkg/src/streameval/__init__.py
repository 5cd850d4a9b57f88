"""Top level package for :mod:`streameval`."""

__version__ = "0.1.0"

from .engine import Report, evaluate, run, true_vs_observed  # noqa: E402

__all__ = ["__version__", "Report", "evaluate", "run", "true_vs_observed"]
