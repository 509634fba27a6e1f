"""Network pieces: weight storage, recurrent cells, backbones and the two-stream model."""
from .backbone import (
    Backbone,
    BackboneGraph,
    BackboneSpec,
    Block,
    ConvUnit,
    ImportReport,
    apply_bn_updates,
    backbone_apply,
    build_backbone,
    build_graph,
    import_weights,
    make_divisible,
    read_name_map,
)
from .cells import (
    GATES,
    CellSpec,
    CellState,
    cell_param_count,
    cell_parameter_shapes,
    cell_step,
    convlstm_step,
    init_cell,
    sepconvlstm_step,
    unroll_last,
    unroll_stacked,
)
from .model import (
    Model,
    ModelConfig,
    VARIANTS,
    Prediction,
    build_model,
    default_preproc,
    fuse,
    gradcheck_model_config,
    label_for,
    model_forward,
    predict,
    variant_config,
)
from .weights import WeightStore, is_trainable_name

__all__ = [
    "Backbone",
    "BackboneGraph",
    "BackboneSpec",
    "Block",
    "ConvUnit",
    "ImportReport",
    "apply_bn_updates",
    "backbone_apply",
    "build_backbone",
    "build_graph",
    "import_weights",
    "make_divisible",
    "read_name_map",
    "GATES",
    "CellSpec",
    "CellState",
    "cell_param_count",
    "cell_parameter_shapes",
    "cell_step",
    "convlstm_step",
    "init_cell",
    "sepconvlstm_step",
    "unroll_last",
    "unroll_stacked",
    "Model",
    "ModelConfig",
    "VARIANTS",
    "Prediction",
    "build_model",
    "default_preproc",
    "fuse",
    "gradcheck_model_config",
    "label_for",
    "model_forward",
    "predict",
    "variant_config",
    "WeightStore",
    "is_trainable_name",
]
