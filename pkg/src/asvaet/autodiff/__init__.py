"""Minimal reverse-mode automatic differentiation over numpy arrays."""
from . import ops
from .gradcheck import GradientCheckError, finite_difference_check
from .kernels import BACKEND
from .tensor import ShapeError, Tape, Tensor, backward, current_tape, grad_enabled, no_grad

__all__ = [
    "BACKEND",
    "GradientCheckError",
    "ShapeError",
    "Tape",
    "Tensor",
    "backward",
    "current_tape",
    "finite_difference_check",
    "grad_enabled",
    "no_grad",
    "ops",
]
