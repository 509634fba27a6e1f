"""SepConvLSTM and ConvLSTM cells and their unrolling.

Gate g ∈ {i, f, c, o}:
    separable: pre_g = pw(dw(x, dw_x), pw_x) + pw(dw(h, dw_h), pw_h) + bias
    dense:     pre_g = conv(x, w_x) + conv(h, w_h) + bias
    i, f, o = σ(pre);  c̃ = tanh(pre_c)
    c_t = f ⊗ c_{t−1} + i ⊗ c̃;  h_t = o ⊗ tanh(c_t)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from ..autodiff import ops
from ..autodiff.tape import Params, Var, tape_of
from ..errors import ShapeError
from .init import initial_value

logger = logging.getLogger(__name__)

GATES = ("i", "f", "c", "o")
CellKind = Literal["separable", "dense"]
ArrayOrVar = Union[np.ndarray, Var]


@dataclass(frozen=True)
class CellSpec:
    kind: CellKind = "separable"
    k: int = 3
    c_x: int = 56
    c_h: int = 64

    def __post_init__(self) -> None:
        if self.kind not in ("separable", "dense"):
            raise ShapeError(f"unknown cell kind {self.kind!r}")
        if self.k < 1 or self.k % 2 == 0:
            raise ShapeError(f"cell kernel size must be odd, got {self.k}")


class CellState(NamedTuple):
    h: Var
    c: Var


def cell_parameter_shapes(spec: CellSpec) -> dict[str, tuple[int, ...]]:
    k, cx, ch = spec.k, spec.c_x, spec.c_h
    shapes: dict[str, tuple[int, ...]] = {}
    for g in GATES:
        if spec.kind == "separable":
            shapes[f"{g}.dw_x"] = (k, k, cx)
            shapes[f"{g}.pw_x"] = (cx, ch)
            shapes[f"{g}.dw_h"] = (k, k, ch)
            shapes[f"{g}.pw_h"] = (ch, ch)
        else:
            shapes[f"{g}.w_x"] = (k, k, cx, ch)
            shapes[f"{g}.w_h"] = (k, k, ch, ch)
        shapes[f"{g}.bias"] = (ch,)
    return shapes


def cell_param_count(spec: CellSpec) -> int:
    k2, cx, ch = spec.k * spec.k, spec.c_x, spec.c_h
    if spec.kind == "separable":
        per_gate = k2 * cx + cx * ch + k2 * ch + ch * ch + ch
    else:
        per_gate = k2 * cx * ch + k2 * ch * ch + ch
    return len(GATES) * per_gate


def init_cell(spec: CellSpec, rng: np.random.Generator, dtype=np.float32, prefix: str = "") -> dict[str, np.ndarray]:
    return {
        prefix + name: initial_value(rng, name, shape, dtype)
        for name, shape in cell_parameter_shapes(spec).items()
    }


def _lift(x: ArrayOrVar) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x))


def _lift_params(params: Union[Params, Mapping[str, np.ndarray]]) -> Params:
    if isinstance(params, Params):
        return params
    return Params({k: _lift(v) for k, v in params.items()})


def zero_state(spec: CellSpec, like: Var) -> CellState:
    shape = like.shape[:-1] + (spec.c_h,)
    zeros = tape_of(like).constant(np.zeros(shape, dtype=like.dtype))
    return CellState(zeros, zeros)


def _check_input(spec: CellSpec, x: Var, state: CellState) -> None:
    if x.shape[-1] != spec.c_x:
        raise ShapeError(f"cell input has {x.shape[-1]} channels, expected C_x={spec.c_x}")
    if state.h.shape[-1] != spec.c_h or state.h.shape != state.c.shape:
        raise ShapeError(f"cell state shapes h{state.h.shape} c{state.c.shape} do not match C_h={spec.c_h}")
    if x.shape[:-1] != state.h.shape[:-1]:
        raise ShapeError(f"cell input shape {x.shape} does not match state shape {state.h.shape}")


def input_path(spec: CellSpec, x: Var, params: Params) -> dict[str, Var]:
    """x-side gate pre-activations; independent of the state, so they can be batched over time."""
    if spec.kind == "separable":
        return {g: ops.separable_conv2d(x, params[f"{g}.dw_x"], params[f"{g}.pw_x"]) for g in GATES}
    return {g: ops.conv2d(x, params[f"{g}.w_x"]) for g in GATES}


def _hidden_path(spec: CellSpec, h: Var, params: Params, g: str) -> Var:
    if spec.kind == "separable":
        return ops.separable_conv2d(h, params[f"{g}.dw_h"], params[f"{g}.pw_h"])
    return ops.conv2d(h, params[f"{g}.w_h"])


def _recur(spec: CellSpec, gx: Mapping[str, Var], state: CellState, params: Params) -> CellState:
    pre = {g: ops.add_bias(gx[g] + _hidden_path(spec, state.h, params, g), params[f"{g}.bias"]) for g in GATES}
    i = ops.sigmoid(pre["i"])
    f = ops.sigmoid(pre["f"])
    cand = ops.tanh(pre["c"])
    o = ops.sigmoid(pre["o"])
    c = f * state.c + i * cand
    h = o * ops.tanh(c)
    return CellState(h, c)


def cell_step(
    spec: CellSpec,
    x_t: ArrayOrVar,
    state: Optional[CellState],
    params: Union[Params, Mapping[str, np.ndarray]],
) -> CellState:
    x = _lift(x_t)
    p = _lift_params(params)
    state = state if state is not None else zero_state(spec, x)
    _check_input(spec, x, state)
    return _recur(spec, input_path(spec, x, p), state, p)


def sepconvlstm_step(x_t: ArrayOrVar, state: Optional[CellState], params, k: int = 3) -> CellState:
    x = _lift(x_t)
    p = _lift_params(params)
    spec = CellSpec("separable", k, x.shape[-1], p["i.bias"].shape[0])
    return cell_step(spec, x, state, p)


def convlstm_step(x_t: ArrayOrVar, state: Optional[CellState], params, k: Optional[int] = None) -> CellState:
    x = _lift(x_t)
    p = _lift_params(params)
    spec = CellSpec("dense", k or p["i.w_x"].shape[0], x.shape[-1], p["i.bias"].shape[0])
    return cell_step(spec, x, state, p)


def unroll_last(
    spec: CellSpec,
    xs: Sequence[ArrayOrVar],
    params: Union[Params, Mapping[str, np.ndarray]],
    init: Optional[CellState] = None,
) -> Var:
    """Fold cell_step over xs and return the last hidden state."""
    if len(xs) == 0:
        raise ShapeError("unroll_last needs a nonempty sequence")
    p = _lift_params(params)
    first = _lift(xs[0])
    state = init
    for x in xs:
        x = _lift(x)
        if x.shape != first.shape:
            raise ShapeError(f"sequence shapes differ: {first.shape} vs {x.shape}")
        state = cell_step(spec, x, state, p)
    return state.h


def unroll_stacked(
    spec: CellSpec, x_seq: Var, steps: int, params: Params, init: Optional[CellState] = None
) -> Var:
    """Unroll over a time-major stack (steps·N, H, W, C_x) and return h_T of shape (N, H, W, C_h).

    The x-side convolutions run once over the whole stack.
    """
    total = x_seq.shape[0]
    if steps < 1 or total % steps:
        raise ShapeError(f"stack of {total} frames does not split into {steps} steps")
    n = total // steps
    gx_all = input_path(spec, x_seq, params)
    first = ops.take(x_seq, 0, n)
    state = init if init is not None else zero_state(spec, first)
    _check_input(spec, first, state)
    for t in range(steps):
        gx = {g: ops.take(v, t * n, (t + 1) * n) for g, v in gx_all.items()}
        state = _recur(spec, gx, state, params)
    return state.h
