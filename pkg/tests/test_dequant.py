"""Dequantization exactness, losslessness and the reference GEMM."""

import numpy as np
import pytest

from nxfp.cli import parse_format_spec
from nxfp.container import serialize
from nxfp.dequant import (
    DequantTarget,
    dequantize_block,
    dequantize_tensor,
    gemm_dequant,
    round_to_target,
)
from nxfp.errors import NumericInputError
from nxfp.quant import BlockScale, quantize_block, quantize_tensor

NXFP4 = parse_format_spec("nxfp4")
MXFP4 = parse_format_spec("mxfp4")


class TestDequantizeBlock:
    def test_fig4_reconstruction(self):
        # code for magnitude 6, sign set, nano 1.25, shared exponent 2
        codes = np.zeros(32, dtype=np.uint8)
        codes[0] = 0b1111
        scale = BlockScale(shared_exp=2, nano_code=1, fmt=1)
        out = dequantize_block(scale, codes, NXFP4, DequantTarget.BINARY32)
        assert float(out[0]) == -7.5

    def test_zero_codes_give_zeros(self):
        scale = BlockScale(shared_exp=0, nano_code=0, fmt=1)
        out = dequantize_block(scale, np.zeros(32, dtype=np.uint8), MXFP4)
        assert np.all(out == 0.0)

    def test_reserved_zero_block_scale(self):
        scale = BlockScale(shared_exp=None)
        codes = np.full(32, 3, dtype=np.uint8)
        out = dequantize_block(scale, codes, MXFP4)
        assert np.all(out == 0.0)

    def test_recycled_code_decodes_remapped(self):
        scale = BlockScale(shared_exp=2, nano_code=0, fmt=1)
        codes = np.zeros(32, dtype=np.uint8)
        codes[0] = 0b1000
        out = dequantize_block(scale, codes, NXFP4)
        assert float(out[0]) == -0.25
        out_plain = dequantize_block(scale, codes, MXFP4)
        assert float(out_plain[0]) == 0.0

    def test_wrong_length(self):
        with pytest.raises(NumericInputError):
            dequantize_block(BlockScale(0), np.zeros(8, dtype=np.uint8), MXFP4)


class TestTargets:
    def test_binary32_exact_for_fp16_sources(self):
        rng = np.random.default_rng(5)
        values = rng.standard_normal(640).astype(np.float16)
        packed = quantize_tensor(values, NXFP4)
        f32 = dequantize_tensor(packed, DequantTarget.BINARY32)
        f64 = f32.astype(np.float64)
        # re-quantizing the float32 output reproduces the packed bits, so no
        # precision was lost in the cast
        assert serialize(quantize_tensor(f64, NXFP4)) == serialize(packed)

    def test_binary16_rounds_to_nearest_even(self):
        x = np.array([2048.0 + 1.0], dtype=np.float64)  # halfway in fp16
        assert float(round_to_target(x, DequantTarget.BINARY16)[0]) == 2048.0

    def test_bfloat16_rounding(self):
        x = np.array([1.0 + 2.0 ** -8], dtype=np.float64)  # halfway in bf16
        out = round_to_target(x, DequantTarget.BFLOAT16)
        assert float(out[0]) == 1.0  # ties to even
        y = np.array([1.0 + 2.0 ** -8 + 2.0 ** -18], dtype=np.float64)
        assert float(round_to_target(y, DequantTarget.BFLOAT16)[0]) == 1.0 + 2.0 ** -7

    def test_bfloat16_exact_on_codec_values(self):
        # levels for small formats fit bf16's 8-bit significand exactly
        scale = BlockScale(shared_exp=2, nano_code=1, fmt=1)
        codes = np.array([0b1111] + [0] * 31, dtype=np.uint8)
        out = dequantize_block(scale, codes, NXFP4, DequantTarget.BFLOAT16)
        assert float(out[0]) == -7.5


class TestLosslessness:
    @pytest.mark.parametrize("spec", ["bfp4", "mxfp4", "nxfp4", "nxfp5", "nxfp6"])
    def test_quantize_of_dequantize_is_identity(self, spec):
        cfg = parse_format_spec(spec)
        rng = np.random.default_rng(7)
        values = rng.standard_normal(3200).astype(np.float16)
        packed = quantize_tensor(values, cfg)
        recon = dequantize_tensor(packed, DequantTarget.BINARY32)
        packed2 = quantize_tensor(recon, cfg)
        assert packed2 == packed
        assert np.array_equal(dequantize_tensor(packed2), recon)


class TestGemm:
    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((5, 7)).astype(np.float32)
        b = rng.standard_normal((7, 4)).astype(np.float32)
        pa = quantize_tensor(a, NXFP4)
        pb = quantize_tensor(b, NXFP4)
        out = gemm_dequant(pa, pb)
        da = dequantize_tensor(pa)
        db = dequantize_tensor(pb)
        ref = np.zeros((5, 4), dtype=np.float32)
        for i in range(5):
            for j in range(4):
                acc = np.float32(0.0)
                for k in range(7):
                    acc = np.float32(acc + np.float32(da[i, k] * db[k, j]))
                ref[i, j] = acc
        assert np.array_equal(out, ref)

    def test_diagonal_scaling_case(self):
        diag = np.diag([1.0, 2.0, 4.0, 0.5]).astype(np.float32)
        v = np.array([[1.0], [3.0], [-2.0], [8.0]], dtype=np.float32)
        packed = quantize_tensor(diag, MXFP4)
        out = gemm_dequant(packed, v)
        expect = dequantize_tensor(packed).astype(np.float32) @ v
        assert np.allclose(out, expect)
        # powers of two on the diagonal survive quantization exactly
        assert np.array_equal(out.ravel(), np.array([1.0, 6.0, -8.0, 4.0], np.float32))

    def test_zero_operand(self):
        z = quantize_tensor(np.zeros((4, 4), dtype=np.float32), NXFP4)
        r = np.ones((4, 4), dtype=np.float32)
        assert np.all(gemm_dequant(z, r) == 0.0)

    def test_plain_array_second_operand(self):
        rng = np.random.default_rng(13)
        a = rng.standard_normal((3, 6)).astype(np.float32)
        b = rng.standard_normal((6, 2)).astype(np.float32)
        pa = quantize_tensor(a, NXFP4)
        out = gemm_dequant(pa, b)
        assert out.shape == (3, 2)
        assert out.dtype == np.float32

    def test_shape_mismatch(self):
        a = quantize_tensor(np.ones((2, 3), dtype=np.float32), MXFP4)
        b = quantize_tensor(np.ones((2, 3), dtype=np.float32), MXFP4)
        with pytest.raises(NumericInputError):
            gemm_dequant(a, b)
