"""Package version, read by the hatch version hook."""

__version__ = "0.1.0"
