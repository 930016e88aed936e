"""vp-codec-bench - codec evaluation harness for LED-wall virtual production."""

__version__ = "0.1.0"
