"""Run the four-parameter benchmark and print fitted decay rates.

Usage: python scripts/run_benchmark.py [OUTPUT_DIR] [MAX_DOFS]
"""
import os
import sys
import tempfile
from pathlib import Path

from scfem.cli import OUTPUT_ENV, main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "inclusion4d.cfg"


def run(out: str, max_dofs: int | None) -> int:
    text = CONFIG.read_text()
    if max_dofs is not None:
        text = "\n".join(ln for ln in text.splitlines() if not ln.startswith("max_dofs"))
        text += f"\nmax_dofs = {max_dofs}\n"
    with tempfile.NamedTemporaryFile("w", suffix=".cfg", delete=False) as fh:
        fh.write(text)
    os.environ[OUTPUT_ENV] = out
    try:
        code = main(["-v", "run", fh.name])
    finally:
        os.unlink(fh.name)
    main(["summarize", str(Path(out) / "history.csv")])
    return code


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/inclusion4d"
    cap = int(float(sys.argv[2])) if len(sys.argv) > 2 else None
    sys.exit(run(out, cap))
