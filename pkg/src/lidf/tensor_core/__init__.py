"""Self-contained reverse-mode autodiff core: tensors, NN ops, layers,
optimizers, a finite-difference gradient checker, and the checkpoint
container format."""

from . import functional, nn, optim
from .gradcheck import grad_check
from .serialize import MAGIC, load_container, save_container
from .tensor import Tensor, concat, is_grad_enabled, no_grad, stack

__all__ = [
    "Tensor",
    "concat",
    "stack",
    "no_grad",
    "is_grad_enabled",
    "functional",
    "nn",
    "optim",
    "grad_check",
    "save_container",
    "load_container",
    "MAGIC",
]
