"""Format bridge from SMPL-X parameter archives to motion-clip JSON."""

__version__ = "0.1.0"
