"""Format-spec parsing and end-to-end CLI behavior."""

from pathlib import Path

import numpy as np
import pytest

from nxfp.cli import main, parse_format_spec
from nxfp.errors import FormatSpecError
from nxfp.formats import RecycleRule
from nxfp.ingest import load_npy, synth_weights
from nxfp.quant import NanoSearch

DATA = Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# format specs
# ---------------------------------------------------------------------------

class TestParseFormatSpec:
    def test_mxfp4(self):
        cfg = parse_format_spec("mxfp4")
        assert (cfg.element_bits, cfg.microexp_bits) == (4, 2)
        assert not (cfg.nano_enabled or cfg.adaptive_enabled or cfg.recycle_enabled)

    def test_nxfp4_enables_all_features(self):
        cfg = parse_format_spec("nxfp4")
        assert cfg.nano_enabled and cfg.adaptive_enabled and cfg.recycle_enabled
        assert cfg.nano_search == NanoSearch.ALG1

    def test_bfp_formats(self):
        assert parse_format_spec("bfp4").microexp_bits == 0
        cfg8 = parse_format_spec("bfp8")
        assert (cfg8.element_bits, cfg8.microexp_bits) == (8, 0)

    def test_explicit_suffix(self):
        cfg = parse_format_spec("mxfp6-e2m3")
        assert (cfg.element_bits, cfg.microexp_bits) == (6, 2)
        cfg = parse_format_spec("mxfp6-e3m2")
        assert (cfg.element_bits, cfg.microexp_bits) == (6, 3)

    def test_nxfp5_defaults_to_e2m2(self):
        cfg = parse_format_spec("nxfp5")
        assert (cfg.element_bits, cfg.microexp_bits) == (5, 2)
        assert str(cfg.element_format) == "e2m2"

    def test_nxfp3_clamps_microexp_width(self):
        assert parse_format_spec("nxfp3").microexp_bits == 1

    def test_block_size_and_flags(self):
        cfg = parse_format_spec("nxfp4", block_size=64, no_adaptive=True,
                                recycle_rule="midpoint-top")
        assert cfg.block_size == 64
        assert cfg.nano_enabled and not cfg.adaptive_enabled
        assert cfg.recycle_rule == RecycleRule.MIDPOINT_TOP

    @pytest.mark.parametrize("bad", [
        "", "mxfp9", "mxfp2", "fp4", "mxfp6-e2m4", "mxfp4-e3m0", "bfp4-e1m2",
        "nxfp", "mxfp44",
    ])
    def test_rejects_bad_specs(self, bad):
        with pytest.raises(FormatSpecError):
            parse_format_spec(bad)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _quantize_synth(tmp_path, out_name="t.nxt", extra=()):
    out = tmp_path / out_name
    rc = main(["quantize", "--format", "nxfp4", "--synth", "gaussian",
               "--n", "100", "--seed", "7", "--out", str(out), *extra])
    assert rc == 0
    return out


class TestCliRoundTrips:
    def test_quantize_dequantize_requantize_byte_identical(self, tmp_path, capsys):
        nxt1 = _quantize_synth(tmp_path)
        npy = tmp_path / "d.npy"
        assert main(["dequantize", "--in", str(nxt1), "--out", str(npy)]) == 0
        nxt2 = tmp_path / "t2.nxt"
        assert main(["quantize", "--format", "nxfp4", "--in", str(npy),
                     "--out", str(nxt2)]) == 0
        assert nxt1.read_bytes() == nxt2.read_bytes()

    def test_quantize_prints_footprint(self, tmp_path, capsys):
        _quantize_synth(tmp_path)
        out = capsys.readouterr().out
        assert "bits/element: 4.34375" in out
        assert "blocks: 4 x 32" in out

    def test_dequantize_f16(self, tmp_path):
        nxt = _quantize_synth(tmp_path)
        npy = tmp_path / "d16.npy"
        assert main(["dequantize", "--in", str(nxt), "--out", str(npy),
                     "--dtype", "f16"]) == 0
        out = load_npy(npy)
        assert out.shape == (100,)

    def test_inspect_matches_golden(self, tmp_path, capsys):
        nxt = _quantize_synth(tmp_path, out_name="golden_local.nxt")
        capsys.readouterr()
        assert main(["inspect", "--in", str(nxt)]) == 0
        got = capsys.readouterr().out
        assert got == (DATA / "inspect_gaussian_n100_seed7_nxfp4.txt").read_text()


class TestCliAnalysis:
    def test_analyze_writes_report_and_histogram(self, tmp_path, capsys):
        out = tmp_path / "report.csv"
        rc = main(["analyze", "--format", "nxfp4", "--synth", "gaussian",
                   "--n", "3200", "--seed", "3", "--out", str(out)])
        assert rc == 0
        hist = tmp_path / "report.hist.csv"
        lines = out.read_text().splitlines()
        assert lines[0] == ("feature_set,mse,l1,max_abs,bfp_block_fraction,"
                            "mse_reduction_vs_mxfp")
        assert [ln.split(",")[0] for ln in lines[1:]] == \
            ["mxfp", "mxfp_nm", "mxfp_nm_am", "nxfp", "bfp"]
        assert len(hist.read_text().splitlines()) == 65

    def test_compare_ranks_nxfp_best(self, tmp_path):
        out = tmp_path / "cmp.csv"
        rc = main(["compare", "--format", "mxfp4,bfp4,nxfp4",
                   "--synth", "gaussian", "--n", "32000", "--seed", "5",
                   "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()[1:]
        mse = {ln.split(",")[0]: float(ln.split(",")[2]) for ln in lines}
        assert mse["nxfp4"] == min(mse.values())

    @pytest.mark.parametrize("kind,header", [
        ("block-size", "block_size,format,bits_per_element,mse"),
        ("recycled-value", "remap_value,mse"),
        ("microexp", "microexp_bits,mse"),
    ])
    def test_sweeps_write_csv(self, tmp_path, kind, header):
        out = tmp_path / f"{kind}.csv"
        rc = main(["sweep", "--sweep", kind, "--format", "mxfp4",
                   "--synth", "gaussian", "--n", "6400", "--seed", "2",
                   "--out", str(out)])
        assert rc == 0
        assert out.read_text().splitlines()[0] == header

    def test_identical_invocations_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            assert main(["sweep", "--sweep", "microexp", "--format", "mxfp5",
                         "--synth", "gaussian", "--n", "6400", "--seed", "2",
                         "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestExitCodes:
    def test_usage_error_is_1(self, capsys):
        assert main(["quantize", "--format", "mxfp99", "--synth", "gaussian",
                     "--n", "8", "--seed", "1", "--out", "x.nxt"]) == 1
        assert main(["quantize"]) == 1
        assert main(["nonsense"]) == 1

    def test_io_error_is_2(self, tmp_path, capsys):
        missing = tmp_path / "missing.npy"
        assert main(["quantize", "--format", "mxfp4", "--in", str(missing),
                     "--out", str(tmp_path / "x.nxt")]) == 2
        bad = tmp_path / "bad.nxt"
        bad.write_bytes(b"JUNKJUNKJUNK")
        assert main(["inspect", "--in", str(bad)]) == 2

    def test_numeric_error_is_3(self, tmp_path, capsys):
        npy = tmp_path / "nan.npy"
        arr = np.ones(8, dtype=np.float32)
        arr[3] = np.nan
        np.save(npy, arr)
        assert main(["quantize", "--format", "mxfp4", "--in", str(npy),
                     "--out", str(tmp_path / "x.nxt")]) == 3


def test_synth_matches_library(tmp_path):
    nxt = _quantize_synth(tmp_path)
    from nxfp.container import read_file, serialize
    from nxfp.quant import quantize_tensor
    packed = read_file(nxt)
    lib = quantize_tensor(synth_weights("gaussian", 100, 7), parse_format_spec("nxfp4"))
    assert serialize(packed) == serialize(lib)
