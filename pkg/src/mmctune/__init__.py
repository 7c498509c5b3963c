"""Component-based topology optimization with classifier-gated parameter tuning."""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
