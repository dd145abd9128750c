"""Extended-pose uncertainty, IMU preintegration and a fixed-lag smoother."""
from extpose.lie import ExtendedPose

__all__ = ["ExtendedPose"]
__version__ = "0.1.0"
