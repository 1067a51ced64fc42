"""Minimal reverse-mode automatic differentiation over dense float64 arrays."""
from gpa.autodiff import ops
from gpa.autodiff.gradcheck import analytic_grad, grad_check, grad_check_params, numeric_grad
from gpa.autodiff.optim import Adam, adam_step, sgd_step
from gpa.autodiff.params import ParamSet, glorot_uniform, init_affine
from gpa.autodiff.tensor import Tape, Tensor, backward, current_tape, no_grad

__all__ = [
    "ops", "Tensor", "Tape", "backward", "current_tape", "no_grad", "ParamSet",
    "glorot_uniform", "init_affine", "sgd_step", "adam_step", "Adam", "grad_check",
    "numeric_grad", "analytic_grad", "grad_check_params",
]
