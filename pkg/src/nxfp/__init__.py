"""nxfp: block floating-point / microscaling codec with nano-mantissa
scaling, adaptive microexponents and code recycling."""

from .formats import ElementFormat, LevelTable, RecycleRule, build_level_table
from .quant import (
    BlockReport,
    BlockScale,
    NanoSearch,
    QuantConfig,
    QuantizedBlock,
    nano_candidate,
    quantize_block,
    quantize_tensor,
    shared_exponent,
)
from .dequant import DequantTarget, dequantize_block, dequantize_tensor, gemm_dequant
from .container import (
    PackedTensor,
    deserialize,
    footprint_bits,
    footprint_bits_per_element,
    read_file,
    serialize,
    write_file,
)
from .ingest import TensorSource, load_tensor, synth_weights
from .cli import parse_format_spec

__version__ = "0.1.0"

__all__ = [
    "ElementFormat", "LevelTable", "RecycleRule", "build_level_table",
    "QuantConfig", "NanoSearch", "BlockScale", "BlockReport", "QuantizedBlock",
    "shared_exponent", "nano_candidate", "quantize_block", "quantize_tensor",
    "DequantTarget", "dequantize_block", "dequantize_tensor", "gemm_dequant",
    "PackedTensor", "serialize", "deserialize", "read_file", "write_file",
    "footprint_bits", "footprint_bits_per_element",
    "TensorSource", "load_tensor", "synth_weights",
    "parse_format_spec",
    "__version__",
]
