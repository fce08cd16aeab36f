"""Multiplication-free ternary GEMV kernels and analysis tooling."""

from .core import (
    M_NEG,
    M_POS,
    MaskPair,
    PackedTernaryMatrix,
    ScaleSet,
    decode_masks,
    decode_masks_array,
    decode_masks_loop,
    pack_matrix,
    pack_slots,
    unpack_matrix,
    unpack_slots,
)
from .kernels import (
    ActivationPair,
    GemvOutput,
    OpCounts,
    WidelyLinearLayer,
    count_ops,
    dense_gemv_f32,
    fused_widely_linear,
    oracle_widely_linear,
    ternary_gemv,
    unfused_widely_linear,
)
from .model_io import LayerHeader, footprint_report, read_layer, write_layer
from .parallel import parallel_fused, partition_rows
from .pipeline import BlockWeights, block_forward
from .roofline import PLATFORMS, KernelProfile, PlatformSpec, arithmetic_intensity, attainable

__version__ = "0.1.0"
