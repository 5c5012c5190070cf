#!/usr/bin/env python3
"""Fetch MovieLens-100K and write it as headerless user/item/rating/timestamp TSV.

The ratings come from the ml-100k atomic file bundled in the RecBole 1.2.1
wheel, which is reachable through the package index. Pass --inter to convert
an already downloaded ml-100k.inter instead.
"""

import argparse
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEEL_SPEC = "recbole==1.2.1"
MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"
EXPECTED_ROWS = 100_000


def download_inter(workdir: Path) -> bytes:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", WHEEL_SPEC, "--no-deps", "--only-binary=:all:", "-q", "-d", str(workdir)],
        check=True,
    )
    wheels = sorted(workdir.glob("recbole-*.whl"))
    if not wheels:
        raise SystemExit("pip download produced no recbole wheel")
    with zipfile.ZipFile(wheels[0]) as z:
        return z.read(MEMBER)


def convert(raw: bytes) -> list[str]:
    lines = raw.decode("utf-8").splitlines()
    header = lines[0].split("\t")
    names = [h.split(":")[0] for h in header]
    try:
        cols = [names.index(c) for c in ("user_id", "item_id", "rating", "timestamp")]
    except ValueError:
        raise SystemExit(f"unexpected header: {lines[0]!r}")
    out = []
    for line in lines[1:]:
        if not line:
            continue
        fields = line.split("\t")
        out.append("\t".join(fields[c] for c in cols))
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, type=Path, help="output TSV path")
    parser.add_argument("--inter", type=Path, help="existing ml-100k.inter to convert")
    parser.add_argument("--force", action="store_true", help="overwrite an existing output")
    args = parser.parse_args()

    if args.out.exists() and not args.force:
        print(f"{args.out} exists; nothing to do")
        return 0
    if args.inter:
        raw = args.inter.read_bytes()
    else:
        with tempfile.TemporaryDirectory() as tmp:
            raw = download_inter(Path(tmp))
    rows = convert(raw)
    if len(rows) != EXPECTED_ROWS:
        raise SystemExit(f"expected {EXPECTED_ROWS} ratings, got {len(rows)}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    tmp_out = args.out.with_suffix(args.out.suffix + ".part")
    tmp_out.write_text("\n".join(rows) + "\n")
    tmp_out.replace(args.out)
    print(f"wrote {len(rows)} ratings to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
