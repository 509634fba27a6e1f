"""Parameter and FLOP accounting.

FLOP conventions:
    mac2: a multiply-accumulate counts as 2 FLOPs (default)
    mac1: a multiply-accumulate counts as 1 FLOP
Bias adds, batch-norm affine (2 per element), activations (1 per element),
pooling compares and elementwise gate algebra are itemized separately and
count 1 FLOP per scalar op under either convention.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

from ..errors import ConfigError
from ..nn.backbone import BackboneGraph, ConvUnit, build_graph
from ..nn.cells import CellSpec, cell_param_count
from ..nn.model import Model, ModelConfig
from ..tensor.kernels import conv_output_size

logger = logging.getLogger(__name__)

Convention = Literal["mac2", "mac1"]

# Totals reported for the reference variants (trainable + batch-norm statistics).
REFERENCE_PARAMS: dict[str, int] = {
    "sepconvlstm_m": 333_057,
    "sepconvlstm_c": 371_009,
    "sepconvlstm_a": 333_057,
    "convlstm_m": 815_937,
    "convlstm_c": 853_889,
    "frames_only_c": 185_521,
    "diff_only_c": 185_521,
}


def _mac_factor(convention: Convention) -> int:
    if convention == "mac2":
        return 2
    if convention == "mac1":
        return 1
    raise ConfigError(f"unknown FLOP convention {convention!r}; use mac1 or mac2")


@dataclass
class LayerRow:
    name: str
    params: int = 0
    trainable: int = 0
    macs: int = 0
    bias_flops: int = 0
    bn_flops: int = 0
    act_flops: int = 0
    elementwise_flops: int = 0

    def flops(self, convention: Convention) -> int:
        return self.macs * _mac_factor(convention) + self.bias_flops + self.bn_flops + self.act_flops + self.elementwise_flops


@dataclass
class EfficiencyReport:
    rows: list[LayerRow] = field(default_factory=list)
    convention: Convention = "mac2"

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def trainable_params(self) -> int:
        return sum(r.trainable for r in self.rows)

    @property
    def total_flops(self) -> int:
        return sum(r.flops(self.convention) for r in self.rows)

    def row(self, name: str) -> LayerRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def format(self, flops: bool = False) -> str:
        header = f"{'layer':<32} {'params':>10}"
        if flops:
            header += f" {'flops':>16}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            line = f"{r.name:<32} {r.params:>10,}"
            if flops:
                line += f" {r.flops(self.convention):>16,}"
            lines.append(line)
        lines.append("-" * len(header))
        total = f"{'total':<32} {self.total_params:>10,}"
        if flops:
            total += f" {self.total_flops:>16,}"
        lines.append(total)
        lines.append(f"trainable {self.trainable_params:,}, non-trainable {self.total_params - self.trainable_params:,}")
        if flops:
            lines.append(f"convention {self.convention} (per clip)")
        return "\n".join(lines)


# ── Parameters ───────────────────────────────────────────────────────────────

def _module_of(name: str) -> str:
    parts = name.split(".")
    if parts[0] == "backbone":
        return ".".join(parts[:3])
    return ".".join(parts[:2])


def count_params(model: Union[Model, ModelConfig]) -> EfficiencyReport:
    """Exact tally from stored tensor shapes, one row per block / cell / dense layer."""
    if isinstance(model, Model):
        shapes = {k: v.shape for k, v in model.store.items()}
    else:
        shapes = Model.parameter_shapes(model)
    rows: dict[str, LayerRow] = {}
    for name, shape in shapes.items():
        row = rows.setdefault(_module_of(name), LayerRow(_module_of(name)))
        size = 1
        for d in shape:
            size *= d
        row.params += size
        if not name.endswith((".moving_mean", ".moving_var")):
            row.trainable += size
    return EfficiencyReport(list(rows.values()))


def unit_param_count(unit: ConvUnit) -> int:
    if unit.kind == "standard":
        n = unit.k * unit.k * unit.c_in * unit.c_out
    elif unit.kind == "depthwise":
        n = unit.k * unit.k * unit.c_in
    else:
        n = unit.c_in * unit.c_out
    return n + (unit.c_out if unit.bias else 0) + (4 * unit.c_out if unit.bn else 0)


def closed_form_params(cfg: ModelConfig) -> int:
    """Per-layer formulas, computed without building any tensors."""
    graph = build_graph(cfg.backbone)
    backbone = sum(unit_param_count(u) for u in graph.units)
    cell = cell_param_count(Model.cell_spec(cfg))
    h, w, c = Model.feature_shape(cfg)
    width = h * w * c * (2 if cfg.streams == "both" and cfg.fusion == "C" else 1)
    head = 0
    for out in cfg.head:
        head += width * out + out
        width = out
    return len(cfg.active_streams) * (backbone + cell) + head


# ── FLOPs ────────────────────────────────────────────────────────────────────

def _unit_row(unit: ConvUnit, h: int, w: int) -> tuple[LayerRow, int, int]:
    ho = conv_output_size(h, unit.k, unit.stride, "same")[0]
    wo = conv_output_size(w, unit.k, unit.stride, "same")[0]
    pixels = ho * wo
    if unit.kind == "standard":
        macs = pixels * unit.k * unit.k * unit.c_in * unit.c_out
    elif unit.kind == "depthwise":
        macs = pixels * unit.k * unit.k * unit.c_in
    else:
        macs = pixels * unit.c_in * unit.c_out
    out = pixels * unit.c_out
    row = LayerRow(
        unit.name,
        macs=macs,
        bias_flops=out if unit.bias else 0,
        bn_flops=2 * out if unit.bn else 0,
        act_flops=out if unit.act else 0,
    )
    return row, ho, wo


def _backbone_rows(graph: BackboneGraph, size: int, frames: int, prefix: str) -> tuple[list[LayerRow], int, int]:
    rows = []
    h = w = size
    for block in graph.blocks:
        row = LayerRow(f"{prefix}.{block.name}")
        for unit in block.units:
            unit_row, h, w = _unit_row(unit, h, w)
            for attr in ("macs", "bias_flops", "bn_flops", "act_flops"):
                setattr(row, attr, getattr(row, attr) + getattr(unit_row, attr))
        if block.residual:
            row.elementwise_flops += h * w * block.c_out
        for attr in ("macs", "bias_flops", "bn_flops", "act_flops", "elementwise_flops"):
            setattr(row, attr, getattr(row, attr) * frames)
        rows.append(row)
    return rows, h, w


def cell_flops_row(spec: CellSpec, h: int, w: int, steps: int, name: str = "cell") -> LayerRow:
    pixels = h * w
    k2, cx, ch = spec.k * spec.k, spec.c_x, spec.c_h
    if spec.kind == "separable":
        per_gate = pixels * (k2 * cx + cx * ch + k2 * ch + ch * ch)
    else:
        per_gate = pixels * (k2 * cx * ch + k2 * ch * ch)
    out = pixels * ch
    return LayerRow(
        name,
        macs=4 * per_gate * steps,
        # x-path + h-path sum, then bias, per gate
        bias_flops=4 * 2 * out * steps,
        # three sigmoids, two tanh
        act_flops=5 * out * steps,
        # f⊗c, i⊗c̃, their sum, o⊗tanh(c)
        elementwise_flops=4 * out * steps,
    )


def count_flops(
    cfg: ModelConfig,
    convention: Convention = "mac2",
    input_size: Optional[int] = None,
    n_frames: Optional[int] = None,
) -> EfficiencyReport:
    """Analytic per-clip FLOPs for one forward pass."""
    _mac_factor(convention)
    size = input_size or cfg.backbone.input_size
    frames_n = n_frames or cfg.n_frames
    graph = build_graph(cfg.backbone)
    cell = Model.cell_spec(cfg)
    report = EfficiencyReport(convention=convention)
    pooled = 0
    for stream in cfg.active_streams:
        steps = frames_n if stream == "frames" else frames_n - 1
        rows, h, w = _backbone_rows(graph, size, steps, f"backbone.{stream}")
        report.rows.extend(rows)
        report.rows.append(cell_flops_row(cell, h, w, steps, f"cell.{stream}"))
        ph, pw = h // 2, w // 2
        pooled = ph * pw * cell.c_h
        report.rows.append(LayerRow(f"pool.{stream}", elementwise_flops=3 * pooled))
    width = pooled
    if len(cfg.active_streams) == 2:
        if cfg.fusion == "C":
            width = 2 * pooled
        else:
            # M: leaky_relu, sigmoid, product; A: one add
            fused = 3 * pooled if cfg.fusion == "M" else pooled
            report.rows.append(LayerRow("fusion", elementwise_flops=fused))
    for i, out in enumerate(cfg.head):
        # leaky_relu between layers; the last layer's activation is the output sigmoid
        report.rows.append(LayerRow(f"head.dense{i}", macs=width * out, bias_flops=out, act_flops=out))
        width = out
    _attach_params(report, cfg)
    return report


def _attach_params(report: EfficiencyReport, cfg: ModelConfig) -> None:
    params = {r.name: r for r in count_params(cfg).rows}
    for row in report.rows:
        source = params.get(row.name)
        if source is not None:
            row.params, row.trainable = source.params, source.trainable


# ── Separable vs standard ────────────────────────────────────────────────────

def standard_conv_cost(h: int, w: int, c: int, n: int, k: int, convention: Convention = "mac2") -> int:
    """FLOPs of a K×K stride-1 'same' convolution C → N, with bias."""
    return h * w * (k * k * c * n * _mac_factor(convention) + n)


def separable_conv_cost(h: int, w: int, c: int, n: int, k: int, convention: Convention = "mac2") -> int:
    """FLOPs of depthwise K×K on C then pointwise C → N, one bias after the pointwise step."""
    return h * w * ((k * k * c + c * n) * _mac_factor(convention) + n)


@dataclass
class CostComparison:
    separable: int
    standard: int

    @property
    def ratio(self) -> float:
        return self.separable / self.standard


def compare_conv_cost(h: int, w: int, c: int, n: int, k: int, convention: Convention = "mac2") -> CostComparison:
    """Separable/standard ratio; tends to 1/N + 1/K² as bias costs become negligible."""
    return CostComparison(separable_conv_cost(h, w, c, n, k, convention), standard_conv_cost(h, w, c, n, k, convention))


@dataclass
class VariantRow:
    name: str
    params: int
    flops: int
    reference: Optional[int]

    @property
    def ratio(self) -> Optional[float]:
        return self.params / self.reference if self.reference else None


def compare_variants(configs: dict[str, ModelConfig], convention: Convention = "mac2") -> list[VariantRow]:
    rows = []
    for name, cfg in configs.items():
        rows.append(VariantRow(
            name,
            count_params(cfg).total_params,
            count_flops(cfg, convention).total_flops,
            REFERENCE_PARAMS.get(name),
        ))
    return rows


def format_variants(rows: list[VariantRow], convention: Convention = "mac2") -> str:
    lines = [f"{'variant':<16} {'params':>10} {'reference':>10} {'ratio':>7} {'flops':>18}"]
    for r in rows:
        ref = f"{r.reference:,}" if r.reference else "-"
        ratio = f"{r.ratio:.3f}" if r.ratio else "-"
        lines.append(f"{r.name:<16} {r.params:>10,} {ref:>10} {ratio:>7} {r.flops:>18,}")
    lines.append(f"convention {convention} (per clip)")
    return "\n".join(lines)
