"""File formats, dataset I/O and efficiency accounting."""
from .dataset import ingest_image_dir, load_clip, load_dataset, write_dataset, write_frames
from .efficiency import (
    REFERENCE_PARAMS,
    EfficiencyReport,
    LayerRow,
    closed_form_params,
    compare_conv_cost,
    compare_variants,
    count_flops,
    count_params,
    format_variants,
    separable_conv_cost,
    standard_conv_cost,
)
from .formats import (
    CLP1_VERSION,
    RANGE_SIGNED,
    RANGE_UNIT,
    SCLW_VERSION,
    decode_clp1,
    decode_sclw,
    encode_clp1,
    encode_sclw,
    read_clp1,
    read_sclw,
    write_clp1,
    write_sclw,
)

__all__ = [
    "ingest_image_dir",
    "load_clip",
    "load_dataset",
    "write_dataset",
    "write_frames",
    "REFERENCE_PARAMS",
    "EfficiencyReport",
    "LayerRow",
    "closed_form_params",
    "compare_conv_cost",
    "compare_variants",
    "count_flops",
    "count_params",
    "format_variants",
    "separable_conv_cost",
    "standard_conv_cost",
    "CLP1_VERSION",
    "RANGE_SIGNED",
    "RANGE_UNIT",
    "SCLW_VERSION",
    "decode_clp1",
    "decode_sclw",
    "encode_clp1",
    "encode_sclw",
    "read_clp1",
    "read_sclw",
    "write_clp1",
    "write_sclw",
]
