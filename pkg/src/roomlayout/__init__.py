"""Room layout extraction from depth frames and labeled indoor point clouds."""

__version__ = "0.1.0"
