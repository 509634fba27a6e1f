"""Two-stream network: per-stream backbone → recurrent cell → maxpool, fusion, dense head."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Mapping, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..autodiff import ops
from ..autodiff.tape import Params, Var, tape_of
from ..errors import ConfigError, ShapeError
from ..preproc import Clip, PreprocSpec, prepare_streams
from ..tensor import DTYPES
from .backbone import BackboneGraph, BackboneSpec, BnUpdates, backbone_apply, build_graph, import_weights
from .cells import CellSpec, cell_parameter_shapes, unroll_stacked
from .init import initial_value
from .weights import WeightStore

logger = logging.getLogger(__name__)

StreamName = Literal["frames", "diff"]
FusionKind = Literal["M", "C", "A"]

VIOLENT = "violent"
NONVIOLENT = "nonviolent"


class ModelConfig(BaseModel):
    backbone: BackboneSpec = Field(default_factory=BackboneSpec)
    lstm_filters: int = Field(64, ge=1)
    lstm_kind: Literal["separable", "dense"] = "separable"
    lstm_kernel: int = Field(3, ge=1)
    fusion: FusionKind = "M"
    streams: Literal["both", "frames_only", "diff_only"] = "both"
    head: list[int] = Field(default_factory=lambda: [64, 16, 1])
    leaky_slope: float = 0.1
    n_frames: int = Field(32, ge=2)

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if not self.head or self.head[-1] != 1 or any(w < 1 for w in self.head):
            raise ConfigError(f"head widths must be positive and end in 1, got {self.head}")
        if self.lstm_kernel % 2 == 0:
            raise ConfigError(f"lstm_kernel must be odd, got {self.lstm_kernel}")
        return self

    @property
    def active_streams(self) -> tuple[StreamName, ...]:
        if self.streams == "frames_only":
            return ("frames",)
        if self.streams == "diff_only":
            return ("diff",)
        return ("frames", "diff")

    def steps(self, stream: StreamName) -> int:
        """Time steps seen by a stream: n frames for bsf, n−1 differences for fd."""
        return self.n_frames if stream == "frames" else self.n_frames - 1

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelConfig":
        """Read a bare ModelConfig, or the "model" section of a training config."""
        data = json.loads(Path(path).read_text())
        if isinstance(data, dict) and "model" in data:
            data = data["model"]
        return cls.model_validate(data)


def default_preproc(cfg: ModelConfig) -> PreprocSpec:
    """Resize to 320/224 of the crop side (320 → 224 at full scale), then crop to the backbone input."""
    crop = cfg.backbone.input_size
    return PreprocSpec(n_frames=cfg.n_frames, resize_to=max(crop, round(crop * 320 / 224)), crop_to=crop)


VARIANTS: dict[str, dict] = {
    "sepconvlstm_m": {"fusion": "M"},
    "sepconvlstm_c": {"fusion": "C"},
    "sepconvlstm_a": {"fusion": "A"},
    "convlstm_m": {"fusion": "M", "lstm_kind": "dense"},
    "convlstm_c": {"fusion": "C", "lstm_kind": "dense"},
    "frames_only_c": {"fusion": "C", "streams": "frames_only"},
    "diff_only_c": {"fusion": "C", "streams": "diff_only"},
    "tiny_m": {
        "fusion": "M",
        "backbone": {"kind": "tiny", "tiny_widths": [8, 16, 24, 32], "input_size": 64},
        "lstm_filters": 16,
        "head": [32, 1],
        "n_frames": 16,
    },
}


def variant_config(name: str) -> ModelConfig:
    """Named reference configuration (full-scale variants plus the desk-scale tiny_m)."""
    if name not in VARIANTS:
        raise ConfigError(f"unknown model variant {name!r}; known: {sorted(VARIANTS)}")
    return ModelConfig.model_validate(VARIANTS[name])


def gradcheck_model_config() -> ModelConfig:
    """Smallest two-stream model used by the full-model gradient check."""
    return ModelConfig(
        backbone=BackboneSpec(kind="tiny", tiny_widths=[4, 8], input_size=16),
        lstm_filters=8,
        fusion="M",
        head=[16, 1],
        n_frames=3,
    )


# ── Fusion ───────────────────────────────────────────────────────────────────

def fuse(f_frames: Var, f_diff: Var, kind: FusionKind, slope: float = 0.1) -> Var:
    """M: leaky_relu(F_frames) ⊗ σ(F_diff); C: channel concat; A: elementwise sum."""
    if kind == "C":
        if f_frames.shape[:-1] != f_diff.shape[:-1]:
            raise ShapeError(f"fusion C needs equal spatial dims: {f_frames.shape} vs {f_diff.shape}")
        return ops.concat_channels(f_frames, f_diff)
    if f_frames.shape != f_diff.shape:
        raise ShapeError(f"fusion {kind} needs equal shapes: {f_frames.shape} vs {f_diff.shape}")
    if kind == "M":
        return ops.leaky_relu(f_frames, slope) * ops.sigmoid(f_diff)
    if kind == "A":
        return f_frames + f_diff
    raise ShapeError(f"unknown fusion kind {kind!r}")


# ── Model ────────────────────────────────────────────────────────────────────

@dataclass
class Prediction:
    label: str
    p: float


def label_for(p: float) -> str:
    return VIOLENT if p >= 0.5 else NONVIOLENT


class Model:
    """A built network: config, backbone graph and the WeightStore holding every tensor."""

    def __init__(self, cfg: ModelConfig, store: WeightStore):
        self.cfg = cfg
        self.graph: BackboneGraph = build_graph(cfg.backbone)
        expected = self.parameter_shapes(cfg)
        missing = [k for k in expected if k not in store]
        if missing:
            raise ShapeError(f"weight store lacks {len(missing)} model tensor(s), e.g. {missing[:3]}")
        self.store = store

    # ── Structure ───────────────────────────────────────────────────────────

    @staticmethod
    def cell_spec(cfg: ModelConfig) -> CellSpec:
        c_x = build_graph(cfg.backbone).out_channels
        return CellSpec(cfg.lstm_kind, cfg.lstm_kernel, c_x, cfg.lstm_filters)

    @staticmethod
    def feature_shape(cfg: ModelConfig) -> tuple[int, int, int]:
        """Per-stream map shape after the cell and 2×2 maxpool."""
        h, w, _ = build_graph(cfg.backbone).output_shape(cfg.backbone.input_size, cfg.backbone.input_size)
        return h // 2, w // 2, cfg.lstm_filters

    @classmethod
    def head_shapes(cls, cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
        h, w, c = cls.feature_shape(cfg)
        if h < 1 or w < 1:
            raise ConfigError(f"input size {cfg.backbone.input_size} leaves no spatial extent after pooling")
        fused_c = 2 * c if cfg.streams == "both" and cfg.fusion == "C" else c
        width = h * w * fused_c
        shapes: dict[str, tuple[int, ...]] = {}
        for i, out in enumerate(cfg.head):
            shapes[f"head.dense{i}.kernel"] = (width, out)
            shapes[f"head.dense{i}.bias"] = (out,)
            width = out
        return shapes

    @classmethod
    def parameter_shapes(cls, cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
        graph = build_graph(cfg.backbone)
        cell = cls.cell_spec(cfg)
        shapes: dict[str, tuple[int, ...]] = {}
        for stream in cfg.active_streams:
            shapes.update({f"backbone.{stream}.{k}": v for k, v in graph.parameter_shapes().items()})
            shapes.update({f"cell.{stream}.{k}": v for k, v in cell_parameter_shapes(cell).items()})
        shapes.update(cls.head_shapes(cfg))
        return shapes

    @classmethod
    def build(
        cls,
        cfg: ModelConfig,
        seed: int = 0,
        dtype: str = "f32",
        backbone_store: Optional[Mapping[str, np.ndarray]] = None,
        mapping: Optional[Mapping[str, str]] = None,
    ) -> "Model":
        """Xavier-initialize every tensor from one seeded generator; optionally import backbones."""
        rng = np.random.default_rng(seed)
        dt = DTYPES[dtype]
        store = WeightStore(
            {name: initial_value(rng, name, shape, dt) for name, shape in cls.parameter_shapes(cfg).items()}
        )
        if backbone_store is not None:
            graph = build_graph(cfg.backbone)
            for stream in cfg.active_streams:
                imported, _ = import_weights(graph, backbone_store, mapping)
                for name, value in imported.items():
                    store[f"backbone.{stream}.{name}"] = value.astype(dt)
            store.provenance = "imported"
        logger.info("Built model: streams=%s fusion=%s lstm=%s, %d values",
                    cfg.streams, cfg.fusion, cfg.lstm_kind, store.n_params)
        return cls(cfg, store)

    # ── Forward ─────────────────────────────────────────────────────────────

    def _check_inputs(self, bsf: np.ndarray, fd: np.ndarray) -> None:
        for stream, x in (("frames", bsf), ("diff", fd)):
            if stream not in self.cfg.active_streams:
                continue
            if x.ndim != 5 or x.shape[-1] != 3:
                raise ShapeError(f"{stream} stream expects (N, T, H, W, 3), got shape {x.shape}")
            if x.shape[1] != self.cfg.steps(stream):
                raise ShapeError(
                    f"{stream} stream expects {self.cfg.steps(stream)} time steps, got {x.shape[1]}"
                )

    def stream_features(
        self,
        params: Params,
        stream: StreamName,
        clips: Var,
        training: bool = False,
        bn_updates: Optional[BnUpdates] = None,
    ) -> Var:
        """(N, T, H, W, 3) → pooled last hidden state (N, h, w, C_h)."""
        n, t = clips.shape[:2]
        # time-major stack so each step is a contiguous row range
        stacked = np.swapaxes(clips.value, 0, 1).reshape((t * n,) + clips.shape[2:])
        frames = tape_of(clips).constant(np.ascontiguousarray(stacked))
        updates: Optional[BnUpdates] = {} if bn_updates is not None else None
        feats = backbone_apply(self.graph, params.scope(f"backbone.{stream}"), frames, training, updates)
        if updates:
            for unit, stats in updates.items():
                bn_updates[f"backbone.{stream}.{unit}"] = stats
        h_last = unroll_stacked(self.cell_spec(self.cfg), feats, t, params.scope(f"cell.{stream}"))
        return ops.maxpool2d(h_last, (2, 2))

    def logits(
        self,
        params: Params,
        bsf: Var,
        fd: Var,
        training: bool = False,
        bn_updates: Optional[BnUpdates] = None,
    ) -> Var:
        """Pre-sigmoid scores, shape (N, 1)."""
        self._check_inputs(bsf.value, fd.value)
        inputs = {"frames": bsf, "diff": fd}
        feats = {s: self.stream_features(params, s, inputs[s], training, bn_updates) for s in self.cfg.active_streams}
        if len(feats) == 2:
            x = fuse(feats["frames"], feats["diff"], self.cfg.fusion, self.cfg.leaky_slope)
        else:
            (x,) = feats.values()
        x = ops.flatten(x)
        head = params.scope("head")
        last = len(self.cfg.head) - 1
        for i in range(len(self.cfg.head)):
            x = ops.dense(x, head[f"dense{i}.kernel"], head[f"dense{i}.bias"])
            if i < last:
                x = ops.leaky_relu(x, self.cfg.leaky_slope)
        return x

    def params(self) -> Params:
        return Params({k: Var(v) for k, v in self.store.items()})

    def forward(self, bsf: np.ndarray, fd: np.ndarray) -> np.ndarray:
        """Probabilities p ∈ (0, 1), shape (N,)."""
        dtype = next(iter(self.store.values())).dtype
        z = self.logits(self.params(), Var(np.asarray(bsf, dtype=dtype)), Var(np.asarray(fd, dtype=dtype)))
        return ops.sigmoid(z).value[:, 0]

    def predict(self, clip: Clip, spec: Optional[PreprocSpec] = None) -> Prediction:
        bsf, fd = prepare_streams(clip, spec or default_preproc(self.cfg))
        p = float(self.forward(bsf[None], fd[None])[0])
        return Prediction(label_for(p), p)


def build_model(cfg: ModelConfig, seed: int = 0, dtype: str = "f32") -> Model:
    return Model.build(cfg, seed, dtype)


def model_forward(model: Model, bsf: np.ndarray, fd: np.ndarray) -> Union[float, np.ndarray]:
    """Probability for one clip (T×H×W×3 inputs) or a batch (N×T×H×W×3)."""
    if np.ndim(bsf) == 4:
        return float(model.forward(np.asarray(bsf)[None], np.asarray(fd)[None])[0])
    return model.forward(bsf, fd)


def predict(model: Model, clip: Clip, spec: Optional[PreprocSpec] = None) -> Prediction:
    return model.predict(clip, spec)
