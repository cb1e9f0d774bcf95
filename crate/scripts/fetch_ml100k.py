#!/usr/bin/env python3
"""Fetch MovieLens-100K interactions and write them as data/ml-100k/u.data.

The GroupLens host is not always reachable, so this pulls the copy that
ships inside the RecBole wheel on PyPI and rewrites it in the original
tab-separated `user item rating timestamp` layout.
"""
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT_DIR = os.path.join(ROOT, "data", "ml-100k")
OUT = os.path.join(OUT_DIR, "u.data")
MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def main():
    if os.path.exists(OUT):
        print(f"{OUT} already present")
        return 0
    os.makedirs(OUT_DIR, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.check_call(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, "recbole==1.2.1"]
        )
        wheel = glob.glob(os.path.join(tmp, "recbole-*.whl"))[0]
        with zipfile.ZipFile(wheel) as z:
            raw = z.read(MEMBER).decode("utf-8")
    lines = raw.splitlines()
    rows = []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) >= 4:
            rows.append("\t".join(parts[:4]))
    tmp_out = OUT + ".tmp"
    with open(tmp_out, "w") as f:
        f.write("\n".join(rows) + "\n")
    os.replace(tmp_out, OUT)
    print(f"wrote {len(rows)} interactions to {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
