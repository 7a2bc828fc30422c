#!/usr/bin/env python3
"""
End-to-end smoke run of the CLI: exact checks, a small synthetic world
written to a temp dir, then eval / correlate / compare on those files.

Exit 0 when every step returns the expected code, 2 otherwise.
"""

import sys
import tempfile
from pathlib import Path

# Ensure repo root is on PYTHONPATH BEFORE importing ure_eval
ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

import json

from ure_eval.main import cli_main

WORLD = ["--users", "30", "--n", "60", "--family-size", "6", "--seed", "1"]


def run_tests():
    failures = []

    def step(argv, expected=0):
        code = cli_main(argv)
        if code != expected:
            failures.append((" ".join(argv), f"exit {code}, expected {expected}"))
        return code

    # 1) exact identities
    step(["verify", "--mode", "theorem1", "--n", "8", "--npos", "3", "--nbar", "4", "--k", "2"])
    step(["verify", "--mode", "theorem2", "--n", "6", "--npos", "3", "--m", "2", "--nbar", "3"])
    step(["verify", "--mode", "hypergeom", "--sweep", "--n", "8"])

    # 2) incompatible cutoffs is a usage error
    step(["verify", "--mode", "theorem1", "--n", "8", "--nbar", "3", "--k", "2"], expected=1)

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "world"

        # 3) simulate, then read the files back
        if step(["simulate", *WORLD, "--nbar", "15", "--out", str(out)]) == 0:
            manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))["result"]
            predictions = [str(out / p) for role, p in manifest["files"].items() if role not in ("full", "rand")]
            rand, full = str(out / "rand.csv"), str(out / "full.csv")

            step(["eval", "--scheme", "ure", "--k", "10", "--dataset", rand, "--predictions", predictions[0]])
            step(["eval", "--scheme", "full", "--k", "10", "--dataset", full, "--predictions", predictions[0]])

            multi = [arg for p in predictions for arg in ("--predictions", p)]
            step(["correlate", "--full", full, "--rand", rand, "--fixed", "ure@10", "--k-grid", "1,5,10,30", *multi])
            step(["compare", "--rand", rand, "--full", full, "--k", "10", "--kbar", "3", *multi])

        # 4) synthetic sweep straight to disk
        step(["sweep", "kbar", *WORLD, "--nbar", "20", "--kbar-values", "1,3", "--out", str(Path(tmp) / "kbar.json")])

    # Report
    if failures:
        for argv, reason in failures:
            print(f"[FAIL] {argv} -> {reason}")
        return 2

    print("[PASS] all CLI smoke steps")
    return 0


if __name__ == "__main__":
    raise SystemExit(run_tests())
