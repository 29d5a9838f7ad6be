"""Regenerate tasks/ from the stock definitions.

The JSON files under tasks/ are build products; edit taskio.py and rerun
this instead of patching them by hand.
"""

import argparse
from pathlib import Path

from canrl.taskio import write_stock_tasks


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parent.parent / "tasks")
    args = ap.parse_args()
    for path in write_stock_tasks(args.out):
        print(path)


if __name__ == "__main__":
    main()
