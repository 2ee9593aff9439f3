# Numeric substrate: tensors, differentiable ops, tape, checkpoints
from app.tensor import ops
from app.tensor.checkpoint import load_checkpoint, restore_parameters, save_checkpoint
from app.tensor.gradcheck import grad_check, grad_check_params, max_relative_error
from app.tensor.tensor import OpRecord, Tape, Tensor, current_tape, get_default_dtype, precision

__all__ = [
    "ops",
    "Tensor",
    "Tape",
    "OpRecord",
    "precision",
    "current_tape",
    "get_default_dtype",
    "grad_check",
    "grad_check_params",
    "max_relative_error",
    "save_checkpoint",
    "load_checkpoint",
    "restore_parameters",
]
