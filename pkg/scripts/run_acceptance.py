"""Run the acceptance suite and write its PASS/FAIL table.

    python scripts/run_acceptance.py --out results/acceptance.txt
    python scripts/run_acceptance.py -k "05 or 06"      # a subset
"""
import argparse
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]


class Collect:
    def __init__(self):
        self.lines = []

    def pytest_sessionfinish(self, session):
        mod = sys.modules.get("test_acceptance")
        if mod is not None:
            self.lines = [mod.verdict_line(k) for k in mod.VERDICTS]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("-k", default=None, help="pytest keyword filter")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    argv = [str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider"]
    if args.k:
        argv += ["-k", args.k]
    plugin = Collect()
    status = pytest.main(argv, plugins=[plugin])
    text = "\n".join(plugin.lines) + "\n"
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text)
    return int(status)


if __name__ == "__main__":
    sys.exit(main())
