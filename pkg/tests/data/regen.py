"""Regenerate the golden fixtures in this directory.

Run from the repo root:  python tests/data/regen.py
The goldens pin the bit-exact container layout and the inspect output; only
regenerate them for a deliberate, versioned format change.
"""

import contextlib
import io
from pathlib import Path

from nxfp.cli import main, parse_format_spec
from nxfp.container import write_file
from nxfp.ingest import synth_weights
from nxfp.quant import quantize_tensor

HERE = Path(__file__).parent


def regen() -> None:
    packed = quantize_tensor(synth_weights("gaussian", 96, 7),
                             parse_format_spec("nxfp4"))
    write_file(HERE / "gaussian_n96_seed7_nxfp4.nxt", packed)

    nxt = HERE / "gaussian_n100_seed7_nxfp4.nxt"
    rc = main(["quantize", "--format", "nxfp4", "--synth", "gaussian",
               "--n", "100", "--seed", "7", "--out", str(nxt)])
    assert rc == 0
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        assert main(["inspect", "--in", str(nxt)]) == 0
    (HERE / "inspect_gaussian_n100_seed7_nxfp4.txt").write_text(buf.getvalue())
    print("regenerated goldens in", HERE)


if __name__ == "__main__":
    regen()
