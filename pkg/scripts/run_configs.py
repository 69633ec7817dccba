"""Run every experiment config in a directory through the CLI.

    python scripts/run_configs.py configs --out results --workers 1

Prints one line per config with its exit code and wall time.
"""

import argparse
import sys
import time
from pathlib import Path

from ruinlab.cli import run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config_dir", nargs="?", default="configs")
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--only", nargs="*", default=None, help="config stems to run")
    args = ap.parse_args()
    worst = 0
    for path in sorted(Path(args.config_dir).glob("*.json")):
        if args.only and path.stem not in args.only:
            continue
        t = time.time()
        code = run(path, workers=args.workers, out=str(Path(args.out) / path.stem))
        worst = max(worst, code)
        print(f"{path.stem:<24} exit={code}  {time.time() - t:7.1f}s", flush=True)
    return worst


if __name__ == "__main__":
    sys.exit(main())
