"""Analyze every bundled instance and cross-check its Gramian oracle.

Usage: python scripts/analyze_bundled.py [--format csv]
"""
import argparse
import sys
from pathlib import Path

from stochctrl.cli import main as cli_main

INSTANCES = Path(__file__).resolve().parent.parent / "instances"


def run(fmt: str) -> int:
    worst = 0
    for path in sorted(INSTANCES.glob("*.json")):
        print(f"# {path.name}")
        code = cli_main(["analyze", "--instance", str(path), "--format", fmt])
        print(f"# analyze exit {code}")
        check = cli_main(["oracle-check", "--instance", str(path), "--format", fmt])
        print(f"# oracle-check exit {check}")
        print()
        # exit 1 just means "not controllable"; anything above is a failure
        worst = max(worst, code if code > 1 else 0, check if check > 1 else 0)
    return worst


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--format", choices=("text", "csv"), default="text")
    args = parser.parse_args()
    sys.exit(run(args.format))
