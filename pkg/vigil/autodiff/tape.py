"""Reverse-mode tape: traced values, nodes, and the backward sweep."""
from __future__ import annotations

import hashlib
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping, Optional, Sequence

import numpy as np

from ..errors import NonDifferentiableError, ShapeError

logger = logging.getLogger(__name__)

# parameter name → gradient of identical shape
GradMap = dict[str, np.ndarray]

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class Var:
    """A value flowing through a traced computation."""
    value: np.ndarray
    tape: Optional["Tape"] = None
    requires_grad: bool = False
    name: Optional[str] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self) -> np.dtype:
        return self.value.dtype

    def __add__(self, other: "Var") -> "Var":
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other: "Var") -> "Var":
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other: "Var") -> "Var":
        from . import ops
        return ops.mul(self, other)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Var{label} shape={self.shape} grad={self.requires_grad}>"


@dataclass(eq=False)
class TapeNode:
    op: str
    inputs: tuple[Var, ...]
    output: Var
    backward: BackwardFn
    saved: dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.output.shape


class Params(Mapping[str, Var]):
    """Name → Var view over bound parameters, with prefix scoping."""

    def __init__(self, table: dict[str, Var], prefix: str = ""):
        self._table = table
        self._prefix = prefix

    def scope(self, prefix: str) -> "Params":
        return Params(self._table, f"{self._prefix}{prefix}.")

    def __getitem__(self, key: str) -> Var:
        return self._table[self._prefix + key]

    def __contains__(self, key: object) -> bool:
        return isinstance(key, str) and (self._prefix + key) in self._table

    def __iter__(self) -> Iterator[str]:
        n = len(self._prefix)
        return (k[n:] for k in self._table if k.startswith(self._prefix))

    def __len__(self) -> int:
        return sum(1 for _ in self)


class Tape:
    """Records differentiable ops in creation (topological) order.

    With record=False the same op functions run but nothing is kept, which
    is how untraced forwards reuse the traced code path.
    """

    def __init__(self, record: bool = True, track_kinks: bool = False):
        self.record = record
        self.track_kinks = track_kinks
        self.nodes: list[TapeNode] = []
        self.leaves: dict[str, Var] = {}
        self.output: Optional[Var] = None
        self._kinks: list[bytes] = []
        self._stopped = 0

    # ── Leaves ────────────────────────────────────────────────────────────

    def param(self, name: str, value: np.ndarray, trainable: bool = True) -> Var:
        if name in self.leaves:
            raise ShapeError(f"parameter {name!r} bound twice on one tape")
        var = Var(np.asarray(value), tape=self, requires_grad=trainable and self.record, name=name)
        self.leaves[name] = var
        return var

    def constant(self, value: np.ndarray) -> Var:
        return Var(np.asarray(value), tape=self)

    def bind(self, weights: Mapping[str, np.ndarray], trainable: Callable[[str], bool] = lambda _: True) -> Params:
        table = {name: self.param(name, value, trainable(name)) for name, value in weights.items()}
        return Params(table)

    # ── Recording ─────────────────────────────────────────────────────────

    def emit(
        self,
        op: str,
        inputs: Sequence[Var],
        value: np.ndarray,
        backward: Optional[BackwardFn],
        saved: Optional[dict[str, Any]] = None,
    ) -> Var:
        needs = self.record and not self._stopped and any(v.requires_grad for v in inputs)
        if needs and backward is None:
            raise NonDifferentiableError(op)
        out = Var(value, tape=self, requires_grad=needs)
        if needs:
            self.nodes.append(TapeNode(op, tuple(inputs), out, backward, saved or {}))
        return out

    def note_kink(self, pattern: np.ndarray) -> None:
        """Remember which side of a non-smooth point each element fell on."""
        if self.track_kinks:
            self._kinks.append(hashlib.blake2b(np.ascontiguousarray(pattern).tobytes(), digest_size=16).digest())

    def kink_signature(self) -> bytes:
        return b"".join(self._kinks)

    @contextmanager
    def stop_gradient(self) -> Iterator[None]:
        self._stopped += 1
        try:
            yield
        finally:
            self._stopped -= 1


def tape_of(*vars_: Var) -> Tape:
    for v in vars_:
        if isinstance(v, Var) and v.tape is not None:
            return v.tape
    return Tape(record=False)


def backward(tape: Tape, seed_grad: Optional[np.ndarray] = None, output: Optional[Var] = None) -> GradMap:
    """∂output/∂param for every trainable leaf on the tape.

    Leaves the output never reached get zero gradients, so the map always
    covers every bound trainable parameter.
    """
    out = output if output is not None else tape.output
    if out is None:
        raise ShapeError("tape has no output; use forward_traced or pass output=")
    seed = np.ones_like(out.value) if seed_grad is None else np.asarray(seed_grad, dtype=out.dtype)
    if seed.shape != out.shape:
        raise ShapeError(f"seed gradient shape {seed.shape} does not match output shape {out.shape}")

    grads: dict[int, np.ndarray] = {}
    if out.requires_grad:
        grads[id(out)] = seed
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for var, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not var.requires_grad:
                continue
            key = id(var)
            grads[key] = grads[key] + gi if key in grads else gi

    return {
        name: grads.get(id(var), np.zeros_like(var.value))
        for name, var in tape.leaves.items()
        if var.requires_grad
    }


def forward_traced(
    fn: Callable[[Params, Params], Var],
    inputs: Mapping[str, np.ndarray],
    params: Mapping[str, np.ndarray],
    track_kinks: bool = False,
) -> tuple[np.ndarray, Tape]:
    """Run fn(inputs, params) on a fresh recording tape.

    Inputs are constants; params are trainable leaves. The tape keeps the
    output so `backward(tape, seed)` needs nothing else.
    """
    tape = Tape(record=True, track_kinks=track_kinks)
    in_vars = Params({k: tape.constant(v) for k, v in inputs.items()})
    out = fn(in_vars, tape.bind(params))
    tape.output = out
    return out.value, tape


def forward(
    fn: Callable[[Params, Params], Var],
    inputs: Mapping[str, np.ndarray],
    params: Mapping[str, np.ndarray],
    track_kinks: bool = False,
) -> tuple[np.ndarray, Tape]:
    """Untraced counterpart of forward_traced: same ops, nothing recorded."""
    tape = Tape(record=False, track_kinks=track_kinks)
    in_vars = Params({k: tape.constant(v) for k, v in inputs.items()})
    out = fn(in_vars, tape.bind(params))
    return out.value, tape
