#!/usr/bin/env python3
"""Run the full DEA observer study end to end.

Derives/echoes the operating domain (including the maximum stable step
amplitude), synthesizes all configured observer designs, simulates both
comparison scenarios, verifies every certificate, and writes the
consolidated report.  Results land in --out (default ./out_dea).
"""

import argparse
import sys
from pathlib import Path

from phobs.cli import main as phobs

HERE = Path(__file__).resolve().parent.parent


def run():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(HERE / "configs" / "dea.cfg"))
    ap.add_argument("--out", default="out_dea")
    args = ap.parse_args()

    for cmd in ("domain", "synthesize", "simulate", "verify", "report"):
        print(f"\n=== phobs {cmd} ===")
        code = phobs([cmd, "--config", args.config, "--out", args.out])
        if code != 0:
            print(f"step '{cmd}' exited with {code}", file=sys.stderr)
            return code
    print(f"\nall artifacts in {args.out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
