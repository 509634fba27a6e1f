"""Training and evaluation loops."""
from __future__ import annotations

import json
import logging
import time
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..autodiff import ops
from ..autodiff.tape import Params, backward, forward_traced
from ..errors import ConfigError, DataError
from ..nn.backbone import apply_bn_updates
from ..nn.model import Model, ModelConfig, default_preproc
from ..preproc import AugmentSpec, PreprocSpec, prepare_batch
from ..tensor.kernels import deterministic_mode
from .data import LabeledClips
from .optim import AMSGrad, BiasCorrection, lr_at_epoch

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    model: ModelConfig = Field(default_factory=ModelConfig)
    preproc: PreprocSpec = Field(default_factory=PreprocSpec)
    augment: AugmentSpec = Field(default_factory=AugmentSpec)
    base_lr: float = 4e-4
    lr_floor: float = 5e-5
    halving_period: int = Field(5, ge=1)
    batch_size: int = Field(4, ge=1)
    epochs: int = Field(1, ge=0)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    bias_correction: BiasCorrection = "m_only"
    batchnorm_batch_stats: bool = True
    patience: Optional[int] = Field(None, ge=1)
    target_train_acc: Optional[float] = Field(None, gt=0.0, le=1.0)
    val_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    workers: int = Field(1, ge=1)
    deterministic: bool = False

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if not self.base_lr > self.lr_floor > 0:
            raise ConfigError(f"need base_lr > lr_floor > 0, got {self.base_lr} and {self.lr_floor}")
        if self.preproc.n_frames != self.model.n_frames:
            raise ConfigError(
                f"preproc.n_frames ({self.preproc.n_frames}) must equal model.n_frames ({self.model.n_frames})"
            )
        if self.preproc.crop_to != self.model.backbone.input_size:
            raise ConfigError(
                f"preproc.crop_to ({self.preproc.crop_to}) must equal backbone input_size "
                f"({self.model.backbone.input_size})"
            )
        return self

    def lr(self, epoch: int) -> float:
        return lr_at_epoch(epoch, self.base_lr, self.lr_floor, self.halving_period)

    @classmethod
    def for_model(cls, model: ModelConfig) -> "TrainConfig":
        """Default training settings with pre-processing sized to the model."""
        return cls(model=model, preproc=default_preproc(model))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrainConfig":
        """A training config, or a bare model config wrapped with default training settings."""
        data = json.loads(Path(path).read_text())
        if isinstance(data, dict) and "model" in data:
            return cls.model_validate(data)
        return cls.for_model(ModelConfig.model_validate(data))


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    train_acc: float
    val_acc: Optional[float]
    wall_time: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def final(self) -> Optional[EpochRecord]:
        return self.records[-1] if self.records else None


def _batch_graph(model: Model, frozen: list[str], labels: np.ndarray, bn_updates: Optional[dict], capture: dict):
    def graph(inputs: Params, params: Params):
        merged = Params({**{k: inputs[k] for k in frozen}, **{k: params[k] for k in params}})
        z = model.logits(merged, inputs["bsf"], inputs["fd"], training=bn_updates is not None, bn_updates=bn_updates)
        capture["logits"] = z.value
        return ops.bce_with_logits(z, labels)
    return graph


def train_step(
    model: Model,
    bsf: np.ndarray,
    fd: np.ndarray,
    labels: np.ndarray,
    optimizer: AMSGrad,
    lr: float,
    batch_stats: bool = True,
) -> tuple[float, np.ndarray]:
    """One AMSGrad step on a prepared batch; returns (loss, training-mode logits)."""
    store = model.store
    frozen = [k for k in store if not store.is_trainable(k)]
    bn_updates: Optional[dict] = {} if batch_stats else None
    capture: dict = {}
    dtype = next(iter(store.values())).dtype
    y = labels.astype(dtype).reshape(-1, 1)
    inputs = {"bsf": bsf.astype(dtype, copy=False), "fd": fd.astype(dtype, copy=False)}
    inputs.update({k: store[k] for k in frozen})
    loss, tape = forward_traced(_batch_graph(model, frozen, y, bn_updates, capture), inputs, store.trainable())
    grads = backward(tape)
    optimizer.step(store, grads, lr)
    if bn_updates:
        apply_bn_updates(store, bn_updates)
    return float(loss), capture["logits"][:, 0]


def predict_proba(
    model: Model, data: LabeledClips, preproc: PreprocSpec, batch_size: int = 4, workers: int = 1
) -> np.ndarray:
    """Eval-mode (centre crop, stored BN statistics) probabilities for every clip."""
    probs = []
    for start in range(0, len(data), batch_size):
        idx = list(range(start, min(start + batch_size, len(data))))
        bsf, fd = prepare_batch(data.clips, preproc, idx, train=False, workers=workers)
        probs.append(model.forward(bsf, fd))
    return np.concatenate(probs) if probs else np.zeros(0)


def evaluate(model: Model, data: LabeledClips, preproc: PreprocSpec, batch_size: int = 4, workers: int = 1) -> float:
    """Fraction of clips whose thresholded prediction (p ≥ 0.5 → violent) matches the label."""
    if len(data) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    predicted = predict_proba(model, data, preproc, batch_size, workers) >= 0.5
    return float(np.mean(predicted == (data.labels == 1)))


def fit(
    model: Model,
    data: LabeledClips,
    cfg: TrainConfig,
    val: Optional[LabeledClips] = None,
    log_path: Optional[Union[str, Path]] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainLog:
    """Seeded epoch loop: shuffle, augment, step, log.

    With cfg.patience set and a validation set given, stops once validation
    accuracy has not improved for that many epochs. With cfg.target_train_acc
    set, stops after the first epoch whose training accuracy reaches it.
    """
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    optimizer = AMSGrad(cfg.beta1, cfg.beta2, cfg.eps, cfg.bias_correction)
    log = TrainLog()
    best, stale = -1.0, 0
    sink = open(log_path, "a") if log_path else None
    guard = deterministic_mode(True) if cfg.deterministic else nullcontext()
    try:
        with guard:
            for epoch in range(cfg.epochs):
                started = time.monotonic()
                lr = cfg.lr(epoch)
                order = np.random.default_rng([cfg.seed, epoch]).permutation(len(data))
                losses, correct = [], 0
                for start in range(0, len(order), cfg.batch_size):
                    idx = order[start : start + cfg.batch_size].tolist()
                    bsf, fd = prepare_batch(
                        data.clips, cfg.preproc, idx, train=True, augment_spec=cfg.augment,
                        epoch=epoch, workers=cfg.workers,
                    )
                    labels = data.labels[idx]
                    loss, logits = train_step(model, bsf, fd, labels, optimizer, lr, cfg.batchnorm_batch_stats)
                    losses.append(loss * len(idx))
                    correct += int(np.sum((logits >= 0) == (labels == 1)))
                val_acc = evaluate(model, val, cfg.preproc, cfg.batch_size, cfg.workers) if val is not None and len(val) else None
                record = EpochRecord(
                    epoch=epoch,
                    lr=lr,
                    loss=float(np.sum(losses) / len(data)),
                    train_acc=correct / len(data),
                    val_acc=val_acc,
                    wall_time=round(time.monotonic() - started, 3),
                )
                log.records.append(record)
                line = json.dumps(asdict(record))
                logger.info(line)
                if sink:
                    sink.write(line + "\n")
                    sink.flush()
                if on_epoch:
                    on_epoch(record)
                if cfg.target_train_acc is not None and record.train_acc >= cfg.target_train_acc:
                    logger.info("Reached train_acc %.3f at epoch %d", record.train_acc, epoch)
                    log.stopped_early = True
                    break
                if cfg.patience and val_acc is not None:
                    if val_acc > best:
                        best, stale = val_acc, 0
                    else:
                        stale += 1
                        if stale >= cfg.patience:
                            logger.info("Early stop at epoch %d (no val improvement for %d epochs)", epoch, stale)
                            log.stopped_early = True
                            break
    finally:
        if sink:
            sink.close()
    return log
