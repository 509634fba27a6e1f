"""Per-frame feature extractors: truncated MobileNetV2 and a tiny separable-conv stack.

A backbone is an immutable graph of blocks; its weights live outside it in a
flat name → tensor map (`<block>.<unit>.kernel`, `.bias`, `.bn.gamma`, ...).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping, MutableMapping, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..autodiff import ops
from ..autodiff.tape import Params, Var
from ..errors import ConfigError, ShapeError, WeightImportError
from ..tensor.kernels import conv_output_size
from .init import initial_value

logger = logging.getLogger(__name__)

BN_EPS = 1e-3
BN_MOMENTUM = 0.9

# (expansion t, base channels c, repeats n, first stride s)
MOBILENET_BLOCKS: list[tuple[int, int, int, int]] = [
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 1, 2),
]


def make_divisible(value: float, divisor: int = 8, min_value: Optional[int] = None) -> int:
    """Round a channel count to a multiple of divisor without dropping more than 10%."""
    min_value = min_value or divisor
    new = max(min_value, int(value + divisor / 2) // divisor * divisor)
    if new < 0.9 * value:
        new += divisor
    return new


class BackboneSpec(BaseModel):
    kind: Literal["mobilenet_truncated", "tiny"] = "mobilenet_truncated"
    alpha: float = Field(0.35, gt=0.0)
    stem: int = 32
    blocks: list[tuple[int, int, int, int]] = Field(default_factory=lambda: list(MOBILENET_BLOCKS))
    tiny_widths: list[int] = Field(default_factory=lambda: [8, 16, 24, 32])
    batchnorm: bool = True
    input_size: int = Field(224, ge=1)

    @field_validator("tiny_widths")
    @classmethod
    def _widths_nonempty(cls, v: list[int]) -> list[int]:
        if not v or any(w < 1 for w in v):
            raise ConfigError(f"tiny_widths must be a nonempty list of positive widths, got {v}")
        return v


@dataclass(frozen=True)
class ConvUnit:
    name: str
    kind: Literal["standard", "depthwise", "pointwise"]
    k: int
    stride: int
    c_in: int
    c_out: int
    bias: bool
    bn: bool
    act: Optional[str]

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.kind == "standard":
            kernel: tuple[int, ...] = (self.k, self.k, self.c_in, self.c_out)
        elif self.kind == "depthwise":
            kernel = (self.k, self.k, self.c_in)
        else:
            kernel = (self.c_in, self.c_out)
        shapes = {f"{self.name}.kernel": kernel}
        if self.bias:
            shapes[f"{self.name}.bias"] = (self.c_out,)
        if self.bn:
            for leaf in ("gamma", "beta", "moving_mean", "moving_var"):
                shapes[f"{self.name}.bn.{leaf}"] = (self.c_out,)
        return shapes


@dataclass(frozen=True)
class Block:
    name: str
    units: tuple[ConvUnit, ...]
    residual: bool = False

    @property
    def c_in(self) -> int:
        return self.units[0].c_in

    @property
    def c_out(self) -> int:
        return self.units[-1].c_out


@dataclass(frozen=True)
class BackboneGraph:
    spec: BackboneSpec
    blocks: tuple[Block, ...]
    # x → scale·x + shift before the first block
    input_scale: float = 1.0
    input_shift: float = 0.0
    units: tuple[ConvUnit, ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "units", tuple(u for b in self.blocks for u in b.units))

    @property
    def out_channels(self) -> int:
        return self.blocks[-1].c_out

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for unit in self.units:
            shapes.update(unit.parameter_shapes())
        return shapes

    def output_shape(self, h: int, w: int) -> tuple[int, int, int]:
        for unit in self.units:
            h = conv_output_size(h, unit.k, unit.stride, "same")[0]
            w = conv_output_size(w, unit.k, unit.stride, "same")[0]
        return h, w, self.out_channels


# ── Construction ─────────────────────────────────────────────────────────────

def _mobilenet_blocks(spec: BackboneSpec) -> list[Block]:
    bn = spec.batchnorm
    stem_out = make_divisible(spec.stem * spec.alpha, 8)
    blocks = [Block("stem", (ConvUnit("stem.conv", "standard", 3, 2, 3, stem_out, not bn, bn, "relu6"),))]
    c_in = stem_out
    index = 0
    for t, c, n, s in spec.blocks:
        c_out = make_divisible(int(c * spec.alpha), 8)
        for r in range(n):
            stride = s if r == 0 else 1
            name = f"block{index}"
            units = []
            hidden = c_in
            if t != 1:
                hidden = c_in * t
                units.append(ConvUnit(f"{name}.expand", "pointwise", 1, 1, c_in, hidden, not bn, bn, "relu6"))
            units.append(ConvUnit(f"{name}.depthwise", "depthwise", 3, stride, hidden, hidden, not bn, bn, "relu6"))
            units.append(ConvUnit(f"{name}.project", "pointwise", 1, 1, hidden, c_out, not bn, bn, None))
            blocks.append(Block(name, tuple(units), residual=stride == 1 and c_in == c_out))
            c_in = c_out
            index += 1
    return blocks


def _tiny_blocks(spec: BackboneSpec) -> list[Block]:
    bn = spec.batchnorm
    blocks = []
    c_in = 3
    for index, width in enumerate(spec.tiny_widths):
        name = f"sep{index}"
        blocks.append(Block(name, (
            ConvUnit(f"{name}.depthwise", "depthwise", 3, 2, c_in, c_in, False, False, None),
            ConvUnit(f"{name}.pointwise", "pointwise", 1, 1, c_in, width, not bn, bn, "relu6"),
        )))
        c_in = width
    return blocks


def build_graph(spec: BackboneSpec) -> BackboneGraph:
    if spec.kind == "mobilenet_truncated":
        return BackboneGraph(spec, tuple(_mobilenet_blocks(spec)), input_scale=2.0, input_shift=-1.0)
    return BackboneGraph(spec, tuple(_tiny_blocks(spec)))


def init_weights(
    graph: BackboneGraph, rng: np.random.Generator, dtype=np.float32, prefix: str = ""
) -> dict[str, np.ndarray]:
    return {
        prefix + name: initial_value(rng, name, shape, dtype)
        for name, shape in graph.parameter_shapes().items()
    }


WeightStoreLike = Mapping[str, np.ndarray]


@dataclass
class Backbone:
    graph: BackboneGraph
    weights: dict[str, np.ndarray]

    def forward(self, frames: np.ndarray) -> np.ndarray:
        """Untraced per-frame forward on (H, W, 3) or (N, H, W, 3)."""
        return backbone_apply(self.graph, Params({k: Var(v) for k, v in self.weights.items()}), Var(frames)).value


def build_backbone(
    spec: BackboneSpec,
    init: Union[Literal["xavier"], WeightStoreLike] = "xavier",
    seed: int = 0,
    mapping: Optional[Mapping[str, str]] = None,
    dtype=np.float32,
) -> Backbone:
    graph = build_graph(spec)
    if isinstance(init, str):
        if init != "xavier":
            raise ConfigError(f"unknown backbone init {init!r}")
        weights = init_weights(graph, np.random.default_rng(seed), dtype)
    else:
        weights, _ = import_weights(graph, init, mapping)
    logger.debug("Built %s backbone: %d blocks, %d tensors", spec.kind, len(graph.blocks), len(weights))
    return Backbone(graph, weights)


# ── Forward ──────────────────────────────────────────────────────────────────

BnUpdates = MutableMapping[str, tuple[np.ndarray, np.ndarray]]


def _apply_unit(
    unit: ConvUnit, params: Params, x: Var, training: bool, bn_updates: Optional[BnUpdates]
) -> Var:
    kernel = params[f"{unit.name}.kernel"]
    bias = params[f"{unit.name}.bias"] if unit.bias else None
    if unit.kind == "standard":
        y = ops.conv2d(x, kernel, bias, unit.stride)
    elif unit.kind == "depthwise":
        y = ops.depthwise_conv2d(x, kernel, unit.stride)
        if bias is not None:
            y = ops.add_bias(y, bias)
    else:
        y = ops.pointwise_conv2d(x, kernel, bias)
    if unit.bn:
        bn = params.scope(f"{unit.name}.bn")
        if training:
            y, mu, var = ops.batchnorm_train(y, bn["gamma"], bn["beta"], BN_EPS)
            if bn_updates is not None:
                bn_updates[unit.name] = (mu, var)
        else:
            y = ops.batchnorm_infer(y, bn["gamma"], bn["beta"], bn["moving_mean"], bn["moving_var"], BN_EPS)
    if unit.act is not None:
        y = ops.activation(unit.act, y)
    return y


def backbone_apply(
    graph: BackboneGraph,
    params: Params,
    x: Var,
    training: bool = False,
    bn_updates: Optional[BnUpdates] = None,
) -> Var:
    """Frames (…, H, W, 3) → features (…, h, w, C). Stateless; BN updates are reported, not applied."""
    if x.shape[-1] != 3:
        raise ShapeError(f"backbone expects 3-channel frames, got shape {x.shape}")
    if graph.input_scale != 1.0 or graph.input_shift != 0.0:
        shift = Var(np.full(x.shape, graph.input_shift, dtype=x.dtype))
        x = ops.scale(x, graph.input_scale) + shift
    for block in graph.blocks:
        y = x
        for unit in block.units:
            y = _apply_unit(unit, params, y, training, bn_updates)
        x = x + y if block.residual else y
    return x


def apply_bn_updates(weights: MutableMapping[str, np.ndarray], updates: Mapping[str, tuple[np.ndarray, np.ndarray]],
                     prefix: str = "", momentum: float = BN_MOMENTUM) -> None:
    """moving ← momentum·moving + (1 − momentum)·batch."""
    for unit, (mu, var) in updates.items():
        mean_key, var_key = f"{prefix}{unit}.bn.moving_mean", f"{prefix}{unit}.bn.moving_var"
        old_mean, old_var = weights[mean_key], weights[var_key]
        weights[mean_key] = (momentum * old_mean + (1 - momentum) * mu).astype(old_mean.dtype)
        weights[var_key] = (momentum * old_var + (1 - momentum) * var).astype(old_var.dtype)


# ── Weight import ────────────────────────────────────────────────────────────

@dataclass
class ImportReport:
    matched: list[str]
    unused: list[str]


def read_name_map(path: Union[str, Path]) -> dict[str, str]:
    """Two-column text map `<graph name> <store name>`; '#' starts a comment."""
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected two columns, got {raw!r}")
        mapping[parts[0]] = parts[1]
    return mapping


def import_weights(
    graph: BackboneGraph,
    store: Mapping[str, np.ndarray],
    mapping: Optional[Mapping[str, str]] = None,
    prefix: str = "",
) -> tuple[dict[str, np.ndarray], ImportReport]:
    """Resolve every graph parameter from store; collects all mismatches before failing."""
    mapping = mapping or {}
    weights: dict[str, np.ndarray] = {}
    mismatches: list[str] = []
    used: set[str] = set()
    for name, shape in graph.parameter_shapes().items():
        source = mapping.get(name, prefix + name)
        if source not in store:
            mismatches.append(f"missing {source} (expected {shape})")
            continue
        value = np.asarray(store[source])
        if value.shape != shape:
            mismatches.append(f"shape {source}: expected {shape}, got {value.shape}")
            continue
        weights[prefix + name] = value.copy()
        used.add(source)
    if mismatches:
        raise WeightImportError(mismatches)
    unused = [k for k in store if k not in used and (not prefix or k.startswith(prefix))]
    logger.info("Imported %d backbone tensors (%d unused in store)", len(weights), len(unused))
    return weights, ImportReport(sorted(used), unused)
