"""Sign-motion retargeting, tracking, and tokenization toolkit."""

__version__ = "0.1.0"
