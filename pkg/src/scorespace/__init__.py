"""Experience-guided selection of solution constraints for planning problems."""

__version__ = "0.1.0"
