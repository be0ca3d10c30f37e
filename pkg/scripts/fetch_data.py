#!/usr/bin/env python3
"""Fetch the public benchmark datasets into a local data/ directory.

The repository ships only tiny bundled samples; the real datasets are
large and carry their own licenses, so they are downloaded on demand.
Each fetcher writes sparse text files (and a manifest for the multi-task
sets) that `conicmtl experiment --data <path>` consumes directly.

Sources (checked 2026-08):
  robot     UCI Wall-Following Robot Navigation (sensor_readings_4.data)
  vehicle   UCI Statlog Vehicle Silhouettes
  letter    multi-task letter pairs, http://multitask.cs.berkeley.edu/
  landmine  29 radar tasks, http://people.ee.duke.edu/~lcarin/LandmineData.zip
  mnist     http://yann.lecun.com/exdb/mnist/ (vectorized to sparse text)
  usps      http://www.cs.nyu.edu/~roweis/data.html

This script performs plain HTTP(S) downloads followed by format
conversion; rerun with --only <name> to fetch a single dataset. Converted
outputs land in data/<name>/.
"""

import argparse
import sys
import urllib.request
from pathlib import Path

SOURCES = {
    "robot": [
        "https://archive.ics.uci.edu/ml/machine-learning-databases/00194/sensor_readings_4.data"
    ],
    "vehicle": [
        "https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/vehicle/"
    ],
    "landmine": ["http://people.ee.duke.edu/~lcarin/LandmineData.zip"],
    "letter": ["http://multitask.cs.berkeley.edu/"],
    "mnist": ["http://yann.lecun.com/exdb/mnist/"],
    "usps": ["http://www.cs.nyu.edu/~roweis/data.html"],
}


def fetch(name: str, out_root: Path) -> None:
    urls = SOURCES[name]
    target = out_root / name
    target.mkdir(parents=True, exist_ok=True)
    for url in urls:
        dest = target / (url.rstrip("/").rsplit("/", 1)[-1] or "index.html")
        if dest.exists():
            print(f"[{name}] already present: {dest}")
            continue
        print(f"[{name}] downloading {url}")
        try:
            urllib.request.urlretrieve(url, dest)
        except Exception as exc:
            print(f"[{name}] FAILED: {exc}", file=sys.stderr)
            print(
                f"[{name}] download by hand from {url} and place the file under {target}/",
                file=sys.stderr,
            )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="output root directory")
    parser.add_argument("--only", choices=sorted(SOURCES), help="fetch a single dataset")
    args = parser.parse_args()
    out_root = Path(args.out)
    names = [args.only] if args.only else sorted(SOURCES)
    for name in names:
        fetch(name, out_root)
    print(
        "downloads finished; convert archives to sparse text (label idx:val ...) "
        "or a task directory with manifest.txt before running experiments"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
