"""trajfuse: object-pose trajectory fusion and evaluation toolkit."""

from .kernels import BACKEND_NAME
from .se3 import Pose, Rotation, Twist

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "Pose", "Rotation", "Twist", "__version__"]
