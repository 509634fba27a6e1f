"""Loss, AMSGrad, LR schedule, training/evaluation loops and the synthetic dataset."""
from .data import LABELS, LabeledClips, train_val_split
from .loop import EpochRecord, TrainConfig, TrainLog, evaluate, fit, predict_proba, train_step
from .loss import bce_loss, bce_with_logits, logit
from .optim import AMSGrad, OptState, amsgrad_step, init_state, lr_at_epoch
from .synth import make_synth

__all__ = [
    "LABELS",
    "LabeledClips",
    "train_val_split",
    "EpochRecord",
    "TrainConfig",
    "TrainLog",
    "evaluate",
    "fit",
    "predict_proba",
    "train_step",
    "bce_loss",
    "bce_with_logits",
    "logit",
    "AMSGrad",
    "OptState",
    "amsgrad_step",
    "init_state",
    "lr_at_epoch",
    "make_synth",
]
