"""Reverse-mode differentiation over the tensor kernels, plus a finite-difference oracle."""
from . import ops
from .gradcheck import (
    CASES,
    OP_CASES,
    GradcheckReport,
    ParamCheck,
    finite_diff_grad,
    gradcheck,
    relative_error,
    run_all,
    run_case,
)
from .tape import GradMap, Params, Tape, TapeNode, Var, backward, forward, forward_traced, tape_of

__all__ = [
    "ops",
    "CASES",
    "OP_CASES",
    "GradcheckReport",
    "ParamCheck",
    "finite_diff_grad",
    "gradcheck",
    "relative_error",
    "run_all",
    "run_case",
    "GradMap",
    "Params",
    "Tape",
    "TapeNode",
    "Var",
    "backward",
    "forward",
    "forward_traced",
    "tape_of",
]
