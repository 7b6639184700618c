"""Bit-exact emulation of Microscaling (MX) block formats."""

from .block import MxBlock, QuantConfig, compute_shared_exp, dequantize_block, quantization_error, quantize_block
from .flow import FlowConfig, QuantizedLinearState, linear_backward, linear_forward, sgd_step, train_demo
from .formats import (
    E2M1,
    E2M3,
    E3M2,
    E4M3,
    E5M2,
    ELEMENT_FORMATS,
    INT8,
    MX_FORMATS,
    ElementFormat,
    RoundingMode,
    decode_element,
    decode_scale,
    encode_element,
    enumerate_format,
)
from .linalg import GemmResult, blocked_fp32_gemm, compare_to_fp32, fp32_gemm, mx_dot, mx_gemm
from .metrics import ErrorReport
from .tensor import MxTensor, dequantize_tensor, quantize_tensor, transpose_2d

__version__ = "0.1.0"
